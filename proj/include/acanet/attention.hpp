#pragma once

// Multi-head cross attention and the cross-attention transformer (CAT) block:
//
//   half = E1 + Attention(LN_a(E1), LN_a(E2))
//   out  = half + MLP(LN_m(half))

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "params.hpp"
#include "tensor.hpp"

namespace aca {

/// Per-head attention weight matrices captured during a forward pass.
struct AttentionTrace {
  std::vector<Tensor> head_weights;
};

struct CatBlockParams {
  std::size_t heads = 1;
  Tensor w_q, w_k, w_v;  // C x C; head h uses columns [h*d, (h+1)*d)
  Linear out;
  LayerNormParams ln_attn;
  LayerNormParams ln_mlp;
  Linear mlp_in;   // C -> 4C
  Linear mlp_out;  // 4C -> C

  static CatBlockParams make(Initializer& init, std::size_t channels, std::size_t heads,
                             std::size_t mlp_ratio = 4) {
    if (heads == 0 || channels % heads != 0)
      throw ShapeError("CAT block: width " + std::to_string(channels) +
                       " is not divisible by head count " + std::to_string(heads));
    CatBlockParams p;
    p.heads = heads;
    p.w_q = init.glorot(channels, channels);
    p.w_k = init.glorot(channels, channels);
    p.w_v = init.glorot(channels, channels);
    p.out = Linear::make(init, channels, channels);
    p.ln_attn = LayerNormParams::make(channels);
    p.ln_mlp = LayerNormParams::make(channels);
    p.mlp_in = Linear::make(init, channels, mlp_ratio * channels);
    p.mlp_out = Linear::make(init, mlp_ratio * channels, channels);
    return p;
  }

  std::size_t width() const { return w_q.rows(); }
  std::size_t head_dim() const { return width() / heads; }

  /// Zeroes the attention output projection and the MLP so the block is the identity.
  void zero_residual_branches() {
    for (Tensor* t : {&out.weight, &out.bias, &mlp_in.weight, &mlp_in.bias, &mlp_out.weight,
                      &mlp_out.bias})
      for (auto& v : t->mutable_values()) v = 0.0;
  }

  void for_each_param(const ParamVisitor& f, const std::string& prefix) {
    f(prefix + ".w_q", w_q);
    f(prefix + ".w_k", w_k);
    f(prefix + ".w_v", w_v);
    out.for_each_param(f, prefix + ".out");
    ln_attn.for_each_param(f, prefix + ".ln_attn");
    ln_mlp.for_each_param(f, prefix + ".ln_mlp");
    mlp_in.for_each_param(f, prefix + ".mlp_in");
    mlp_out.for_each_param(f, prefix + ".mlp_out");
  }
};

/// softmax(Q K^T / sqrt(d)) V per head, heads concatenated, then projected.
/// `kv_mask[j] == false` removes key/value row j; an empty mask keeps all.
inline Tensor cross_attention(const CatBlockParams& p, const Tensor& q_in, const Tensor& kv_in,
                              const std::vector<bool>& kv_mask = {}, AttentionTrace* trace = nullptr) {
  const auto c = p.width();
  if (q_in.ndim() != 2 || kv_in.ndim() != 2 || q_in.cols() != c || kv_in.cols() != c)
    throw ShapeError("cross_attention: inputs " + shape_str(q_in.shape()) + " and " +
                     shape_str(kv_in.shape()) + " must both have width " + std::to_string(c));
  if (!kv_mask.empty() && kv_mask.size() != kv_in.rows())
    throw ShapeError("cross_attention: mask has " + std::to_string(kv_mask.size()) +
                     " entries for " + std::to_string(kv_in.rows()) + " key rows");
  const auto d = p.head_dim();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  auto q = matmul(q_in, p.w_q);
  auto k = matmul(kv_in, p.w_k);
  auto v = matmul(kv_in, p.w_v);
  Tensor merged;
  for (std::size_t h = 0; h < p.heads; ++h) {
    auto qh = slice_cols(q, h * d, (h + 1) * d);
    auto kh = slice_cols(k, h * d, (h + 1) * d);
    auto vh = slice_cols(v, h * d, (h + 1) * d);
    auto w = row_softmax(scale(matmul_nt(qh, kh), inv_sqrt_d), kv_mask);
    if (trace) trace->head_weights.push_back(w.detach());
    auto oh = matmul(w, vh);
    merged = h == 0 ? oh : concat_cols(merged, oh);
  }
  return p.out(merged);
}

inline Tensor cat_block(const CatBlockParams& p, const Tensor& e1, const Tensor& e2,
                        const std::vector<bool>& kv_mask = {}, AttentionTrace* trace = nullptr) {
  auto half = add(e1, cross_attention(p, p.ln_attn(e1), p.ln_attn(e2), kv_mask, trace));
  auto hidden = relu(p.mlp_in(p.ln_mlp(half)));
  return add(half, p.mlp_out(hidden));
}

enum class InterGraphDirection { global_query, ongoing_query };

/// Global-query (default) returns M x C over global nodes; ongoing-query
/// returns m x C over ongoing slots.
inline Tensor inter_graph_cat(const CatBlockParams& p, const Tensor& e_global,
                              const Tensor& e_ongoing, const std::vector<bool>& ongoing_mask,
                              InterGraphDirection dir = InterGraphDirection::global_query,
                              AttentionTrace* trace = nullptr) {
  if (dir == InterGraphDirection::global_query)
    return cat_block(p, e_global, e_ongoing, ongoing_mask, trace);
  return cat_block(p, e_ongoing, e_global, {}, trace);
}

/// Graph nodes attend over the supply/environment feature tokens.
inline Tensor influence_cat(const CatBlockParams& p, const Tensor& e_graph, const Tensor& f_tokens,
                            AttentionTrace* trace = nullptr) {
  return cat_block(p, e_graph, f_tokens, {}, trace);
}

}  // namespace aca
