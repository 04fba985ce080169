#pragma once

// One gradient check per differentiable tensor op on randomised shapes.
// Shared by the unit suite and the acceptance runner.

#include "support.hpp"

namespace aca::testing {

inline constexpr double kOpTolerance = 1e-4;

struct OpCase {
  std::string name;
  std::function<GradCheck(std::mt19937_64&)> run;
};

namespace detail {

inline std::size_t dim(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline GradCheck unary(std::mt19937_64& rng, Shape s, const std::function<Tensor(const Tensor&)>& op,
                       double lo = -1.0, double hi = 1.0) {
  auto a = random_tensor(rng, std::move(s), lo, hi);
  return gradcheck(std::vector<Tensor>{a}, [&] { return probe(op(a)); });
}

inline GradCheck binary(std::mt19937_64& rng, Shape sa, Shape sb,
                        const std::function<Tensor(const Tensor&, const Tensor&)>& op) {
  auto a = random_tensor(rng, std::move(sa));
  auto b = random_tensor(rng, std::move(sb));
  return gradcheck(std::vector<Tensor>{a, b}, [&] { return probe(op(a, b)); });
}

}  // namespace detail

inline std::vector<OpCase> op_cases() {
  using detail::binary;
  using detail::dim;
  using detail::unary;
  std::vector<OpCase> c;
  c.push_back({"matmul", [](auto& rng) {
                 const auto k = dim(rng, 1, 5);
                 return binary(rng, {dim(rng, 1, 5), k}, {k, dim(rng, 1, 5)}, matmul);
               }});
  c.push_back({"matmul_nt", [](auto& rng) {
                 const auto k = dim(rng, 1, 5);
                 return binary(rng, {dim(rng, 1, 5), k}, {dim(rng, 1, 5), k}, matmul_nt);
               }});
  c.push_back({"row_softmax", [](auto& rng) {
                 return unary(rng, {dim(rng, 1, 5), dim(rng, 2, 6)}, [](const Tensor& a) { return row_softmax(a); },
                              -2, 2);
               }});
  c.push_back({"row_softmax_masked", [](auto& rng) {
                 const auto cols = dim(rng, 2, 6);
                 std::vector<bool> mask(cols, true);
                 mask[0] = false;
                 return unary(rng, {dim(rng, 1, 5), cols}, [&](const Tensor& a) { return row_softmax(a, mask); }, -2,
                              2);
               }});
  c.push_back({"layer_norm", [](auto& rng) {
                 auto a = random_tensor(rng, {dim(rng, 1, 4), dim(rng, 2, 8)});
                 auto g = random_tensor(rng, {a.cols()});
                 auto b = random_tensor(rng, {a.cols()});
                 return gradcheck(std::vector<Tensor>{a, g, b}, [&] { return probe(layer_norm(a, g, b)); });
               }});
  auto same = [](auto& rng) { return Shape{dim(rng, 1, 4), dim(rng, 1, 5)}; };
  c.push_back({"add", [=](auto& rng) {
                 auto s = same(rng);
                 return binary(rng, s, s, add);
               }});
  c.push_back({"sub", [=](auto& rng) {
                 auto s = same(rng);
                 return binary(rng, s, s, sub);
               }});
  c.push_back({"mul", [=](auto& rng) {
                 auto s = same(rng);
                 return binary(rng, s, s, mul);
               }});
  c.push_back({"scale", [=](auto& rng) { return unary(rng, same(rng), [](const Tensor& a) { return scale(a, -1.7); }); }});
  c.push_back(
      {"add_scalar", [=](auto& rng) { return unary(rng, same(rng), [](const Tensor& a) { return add_scalar(a, 0.3); }); }});
  c.push_back({"relu", [=](auto& rng) { return unary(rng, same(rng), relu); }});
  c.push_back({"softplus", [=](auto& rng) { return unary(rng, same(rng), softplus); }});
  c.push_back({"transpose", [=](auto& rng) { return unary(rng, same(rng), transpose); }});
  c.push_back({"reshape", [=](auto& rng) {
                 return unary(rng, same(rng), [](const Tensor& a) { return reshape(a, {a.numel()}); });
               }});
  c.push_back({"add_bias", [](auto& rng) {
                 const auto cols = dim(rng, 1, 5);
                 return binary(rng, {dim(rng, 1, 4), cols}, {cols}, add_bias);
               }});
  c.push_back({"mul_rows", [](auto& rng) {
                 const auto rows = dim(rng, 1, 4);
                 return binary(rng, {rows, dim(rng, 1, 5)}, {rows}, mul_rows);
               }});
  c.push_back({"mean_rows", [=](auto& rng) { return unary(rng, same(rng), mean_rows); }});
  c.push_back({"repeat_rows", [=](auto& rng) {
                 return unary(rng, {1, dim(rng, 1, 5)}, [](const Tensor& a) { return repeat_rows(a, 3); });
               }});
  c.push_back({"sum_all", [=](auto& rng) {
                 auto a = random_tensor(rng, same(rng));
                 return gradcheck(std::vector<Tensor>{a}, [&] { return sum_all(a); });
               }});
  c.push_back({"mean_all", [=](auto& rng) {
                 auto a = random_tensor(rng, same(rng));
                 return gradcheck(std::vector<Tensor>{a}, [&] { return mean_all(a); });
               }});
  c.push_back({"mse", [=](auto& rng) {
                 auto s = same(rng);
                 auto a = random_tensor(rng, s);
                 auto b = random_tensor(rng, s);
                 return gradcheck(std::vector<Tensor>{a, b}, [&] { return mse(a, b); });
               }});
  c.push_back({"mae", [=](auto& rng) {
                 auto s = same(rng);
                 auto a = random_tensor(rng, s);
                 auto b = random_tensor(rng, s);
                 return gradcheck(std::vector<Tensor>{a, b}, [&] { return mae(a, b); });
               }});
  c.push_back({"concat_rows", [](auto& rng) {
                 const auto cols = dim(rng, 1, 5);
                 return binary(rng, {dim(rng, 1, 4), cols}, {dim(rng, 1, 3), cols}, concat_rows);
               }});
  c.push_back({"concat_cols", [](auto& rng) {
                 const auto rows = dim(rng, 1, 4);
                 return binary(rng, {rows, dim(rng, 1, 4)}, {rows, dim(rng, 1, 3)}, concat_cols);
               }});
  c.push_back({"slice_cols", [](auto& rng) {
                 return unary(rng, {dim(rng, 1, 4), dim(rng, 2, 5)},
                              [](const Tensor& a) { return slice_cols(a, 1, a.cols()); });
               }});
  c.push_back({"select_rows", [](auto& rng) {
                 return unary(rng, {dim(rng, 1, 4), dim(rng, 1, 5)}, [](const Tensor& a) {
                   std::vector<std::size_t> idx = {a.rows() - 1, 0, a.rows() - 1};
                   return select_rows(a, idx);
                 });
               }});
  c.push_back({"scatter_rows", [](auto& rng) {
                 const auto cols = dim(rng, 1, 5);
                 return binary(rng, {5, cols}, {2, cols}, [](const Tensor& base, const Tensor& rows) {
                   std::vector<std::size_t> at = {3, 1};
                   return scatter_rows(base, rows, at);
                 });
               }});
  c.push_back({"stack_scalars", [](auto& rng) {
                 return binary(rng, {1}, {1}, [](const Tensor& a, const Tensor& b) {
                   std::vector<Tensor> xs = {a, b, a};
                   return stack_scalars(xs);
                 });
               }});
  return c;
}

}  // namespace aca::testing
