#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "asc/ops.hpp"

namespace asc {

// One multi-head attention block: Q/K/V projections, per-head scaled
// dot-product, head concat, output projection, dropout, residual, layernorm.
// The block maps the query stream width D back to D; the inner projection
// width (d_model) may differ, as may the key/value source width.
template <typename T>
struct MhaParams {
  Tensor<T> w_q;       // [D_q_in, d_model]
  Tensor<T> w_k;       // [D_kv_in, d_model]
  Tensor<T> w_v;       // [D_kv_in, d_model]
  Tensor<T> w_o;       // [d_model, D_q_in]
  Tensor<T> ln_gain;   // [D_q_in]
  Tensor<T> ln_shift;  // [D_q_in]
  int n_heads = 8;
  T dropout_rate = T(0.1);

  std::size_t d_model() const { return w_q.dim(1); }
  std::size_t head_dim() const { return d_model() / static_cast<std::size_t>(n_heads); }

  void validate() const {
    if (n_heads < 1) throw ShapeError("mha: n_heads must be >= 1");
    if (w_q.rank() != 2 || w_k.rank() != 2 || w_v.rank() != 2 || w_o.rank() != 2) {
      throw ShapeError("mha: projection matrices must be rank 2");
    }
    if (w_k.dim(1) != d_model() || w_v.dim(1) != d_model() || w_o.dim(0) != d_model()) {
      throw ShapeError("mha: projection widths disagree on d_model");
    }
    if (w_k.dim(0) != w_v.dim(0)) throw ShapeError("mha: w_k/w_v input widths differ");
    if (d_model() % static_cast<std::size_t>(n_heads) != 0) {
      throw ShapeError("mha: d_model " + std::to_string(d_model()) + " not divisible by " +
                       std::to_string(n_heads) + " heads");
    }
    if (w_o.dim(1) != w_q.dim(0)) {
      throw ShapeError("mha: w_o output width must match the query stream for the residual");
    }
    if (ln_gain.size() != w_q.dim(0) || ln_shift.size() != w_q.dim(0)) {
      throw ShapeError("mha: layernorm params must match the query stream width");
    }
  }
};

// Optional capture of intermediate values for inspection and tests.
template <typename T>
struct AttnCapture {
  std::vector<Tensor<T>> head_weights;  // per head, [T_q, T_kv], rows sum to 1
  Tensor<T> pre_residual;               // O_a, [T_q, D_q_in]
};

// Sinusoidal position table: PE[t,2i] = sin(t / 10000^(2i/D)),
// PE[t,2i+1] = cos(t / 10000^(2i/D)). Frozen (never on a tape).
template <typename T>
Tensor<T> positional_encoding(std::size_t t_len, std::size_t d) {
  if (d % 2 != 0) throw ShapeError("positional_encoding: D must be even, got " + std::to_string(d));
  Tensor<T> pe = Tensor<T>::zeros({t_len, d});
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double rate = std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(t) / rate;
      (*pe.data)[t * d + 2 * i] = static_cast<T>(std::sin(angle));
      (*pe.data)[t * d + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

// query_src [T_q, D], kv_src [T_kv, D_kv] -> [T_q, D]. Self-attention when
// both arguments are the same tensor.
template <typename T>
Tensor<T> mha_block(const Tensor<T>& query_src, const Tensor<T>& kv_src, const MhaParams<T>& p,
                    bool training, Rng& rng, AttnCapture<T>* capture = nullptr) {
  p.validate();
  if (query_src.rank() != 2 || kv_src.rank() != 2) {
    throw ShapeError("mha: inputs must be [T, D] matrices");
  }
  if (query_src.dim(0) == 0 || kv_src.dim(0) == 0) {
    throw ShapeError("mha: empty sequence");
  }
  if (query_src.dim(1) != p.w_q.dim(0)) {
    throw ShapeError("mha: query width " + std::to_string(query_src.dim(1)) + " vs w_q " +
                     shape_str(p.w_q.shape));
  }
  if (kv_src.dim(1) != p.w_k.dim(0)) {
    throw ShapeError("mha: kv width " + std::to_string(kv_src.dim(1)) + " vs w_k " +
                     shape_str(p.w_k.shape));
  }

  const Tensor<T> q = matmul(query_src, p.w_q);
  const Tensor<T> k = matmul(kv_src, p.w_k);
  const Tensor<T> v = matmul(kv_src, p.w_v);

  const std::size_t d_head = p.head_dim();
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d_head));
  std::vector<Tensor<T>> head_outs;
  head_outs.reserve(static_cast<std::size_t>(p.n_heads));
  for (int h = 0; h < p.n_heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * d_head;
    const Tensor<T> qh = slice_cols(q, c0, c0 + d_head);
    const Tensor<T> kh = slice_cols(k, c0, c0 + d_head);
    const Tensor<T> vh = slice_cols(v, c0, c0 + d_head);
    const Tensor<T> scores = scale(matmul_nt(qh, kh), inv_sqrt_d);
    const Tensor<T> weights = softmax(scores, 1);
    if (capture) capture->head_weights.push_back(weights.detached());
    head_outs.push_back(matmul(weights, vh));
  }
  const Tensor<T> concat = concat_cols(head_outs);
  const Tensor<T> projected = matmul(concat, p.w_o);
  if (capture) capture->pre_residual = projected.detached();
  const Tensor<T> dropped = dropout(projected, p.dropout_rate, training, rng);
  const Tensor<T> residual = add(dropped, query_src);
  return layernorm(residual, p.ln_gain, p.ln_shift);
}

// Sequential self-attention blocks; zero layers is the identity.
template <typename T>
Tensor<T> self_attention_stack(const Tensor<T>& input, std::span<const MhaParams<T>> layers,
                               bool training, Rng& rng) {
  Tensor<T> h = input;
  for (const MhaParams<T>& layer : layers) {
    h = mha_block(h, h, layer, training, rng);
  }
  return h;
}

// One pooling head: scores = softmax_t(tanh(x W1) w2), output = sum_t
// scores[t] * (x Wv)[t].
template <typename T>
struct AttnPoolHead {
  Tensor<T> w1;  // [D, attn_dim]
  Tensor<T> w2;  // [attn_dim, 1]
  Tensor<T> wv;  // [D, out_per_head]
};

template <typename T>
struct AttnPoolParams {
  std::vector<AttnPoolHead<T>> heads;

  std::size_t output_dim() const {
    std::size_t d = 0;
    for (const auto& h : heads) d += h.wv.dim(1);
    return d;
  }
};

// [T, D] -> concatenated per-head pooled vectors. Invariant to row order.
template <typename T>
Tensor<T> attention_pool(const Tensor<T>& input, const AttnPoolParams<T>& p,
                         std::vector<Tensor<T>>* score_capture = nullptr) {
  if (input.rank() != 2) throw ShapeError("attention_pool: need [T, D], got " + shape_str(input.shape));
  if (input.dim(0) == 0) throw ShapeError("attention_pool: empty sequence");
  if (p.heads.empty()) throw ShapeError("attention_pool: no heads configured");
  const std::size_t t_len = input.dim(0);
  std::vector<Tensor<T>> pooled;
  pooled.reserve(p.heads.size());
  for (const AttnPoolHead<T>& head : p.heads) {
    if (head.w1.dim(0) != input.dim(1) || head.wv.dim(0) != input.dim(1)) {
      throw ShapeError("attention_pool: head expects width " + std::to_string(head.w1.dim(0)) +
                       ", input is " + shape_str(input.shape));
    }
    const Tensor<T> hidden = tanh_op(matmul(input, head.w1));   // [T, attn_dim]
    const Tensor<T> logits = matmul(hidden, head.w2);           // [T, 1]
    const Tensor<T> scores = softmax(logits, 0);                // over time
    if (score_capture) score_capture->push_back(scores.detached());
    const Tensor<T> values = matmul(input, head.wv);            // [T, out]
    const Tensor<T> weighted = matmul(reshape(scores, {1, t_len}), values);  // [1, out]
    pooled.push_back(weighted);
  }
  const Tensor<T> cat = concat_cols(pooled);
  return reshape(cat, {cat.size()});
}

}  // namespace asc
