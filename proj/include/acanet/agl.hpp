#pragma once

// Adaptive future-graph learning: A_future = softmax(relu(P P^T)) with
// P = E_out W, supervised by masked-row MSE against the row-normalised truth.

#include <string>
#include <utility>
#include <vector>

#include "graph.hpp"
#include "params.hpp"
#include "tensor.hpp"

namespace aca {

struct AglParams {
  Tensor proj;  // C x C_a

  static AglParams make(Initializer& init, std::size_t channels, std::size_t out_dim) {
    return {init.glorot(channels, out_dim)};
  }

  void for_each_param(const ParamVisitor& f, const std::string& prefix) { f(prefix + ".proj", proj); }
};

/// Row-stochastic M x M future adjacency.
inline Tensor adaptive_adjacency(const AglParams& p, const Tensor& e_out) {
  auto proj = matmul(e_out, p.proj);
  return row_softmax(relu(matmul_nt(proj, proj)));
}

struct NormalizedTruth {
  Tensor matrix;              // rows with mass sum to 1, empty rows stay 0
  std::vector<bool> row_mask; // true where the row carries supervision
};

inline NormalizedTruth truth_adjacency_normalized(const DenseMatrix& raw) {
  const auto n = raw.n;
  if (n == 0) throw ShapeError("truth adjacency is empty");
  std::vector<double> v(raw.values);
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (v[i * n + j] < 0.0)
        throw std::invalid_argument("truth adjacency has a negative entry at (" + std::to_string(i) +
                                    "," + std::to_string(j) + ")");
      sum += v[i * n + j];
    }
    if (sum > 0.0) {
      mask[i] = true;
      for (std::size_t j = 0; j < n; ++j) v[i * n + j] /= sum;
    }
  }
  return {Tensor({n, n}, std::move(v)), std::move(mask)};
}

inline std::vector<std::size_t> masked_rows(const std::vector<bool>& row_mask) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < row_mask.size(); ++i)
    if (row_mask[i]) rows.push_back(i);
  return rows;
}

/// Mean squared error over the entries of supervised rows; 0 when no row is supervised.
inline Tensor graph_loss(const Tensor& a_future, const Tensor& a_truth_norm,
                         const std::vector<bool>& row_mask) {
  if (a_future.shape() != a_truth_norm.shape())
    throw ShapeError("graph_loss: " + shape_str(a_future.shape()) + " vs " +
                     shape_str(a_truth_norm.shape()));
  if (row_mask.size() != a_future.rows())
    throw ShapeError("graph_loss: row mask length does not match matrix rows");
  const auto rows = masked_rows(row_mask);
  if (rows.empty()) return Tensor::scalar(0.0);
  return mse(select_rows(a_future, rows), select_rows(a_truth_norm, rows));
}

}  // namespace aca
