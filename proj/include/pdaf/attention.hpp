// pdaf/attention.hpp
//
// Debiased multi-head self-attention and attentive statistics pooling.
//
// Attention scores follow the usual scaled dot product, then every key
// column j receives an additive bias: the phoneme debias term where the key
// is attendable, -inf where it is masked (silence, padding, ablated
// phonemes). Softmax over a row therefore redistributes probability away
// from over-represented phonemes and gives masked keys exactly zero weight.
// Blocks are post-norm residual transformer blocks without positional
// encoding; pooling is order-agnostic, so frame order carries no signal.

// Copyright 2026  PDAF Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "pdaf/tensor.hpp"

namespace pdaf {

inline constexpr double kPoolEps = 1e-9;

struct BlockConfig {
  int d_model = 128;
  int n_heads = 8;
  int d_k = 32;
  int d_v = 32;
  int d_ff = 1024;
  int n_blocks = 2;

  void validate() const {
    for (int v : {d_model, n_heads, d_k, d_v, d_ff, n_blocks}) {
      if (v < 1) throw ValidationError("BlockConfig: all dimensions must be >= 1");
    }
  }
};

/// Weight matrices draw from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)). The
/// draw order inside each init() is fixed; it is part of run reproducibility.
inline Tensor scaled_uniform_init(Rng &rng, int64_t fan_in, int64_t fan_out) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(fan_in * fan_out));
  for (double &x : v) x = rng.uniform(-limit, limit);
  return Tensor::from_data({fan_in, fan_out}, std::move(v), /*requires_grad=*/true);
}

/// One transformer block's parameters. The order of all_params() is frozen:
/// optimizer slots and checkpoints index into it.
struct BlockParams {
  std::vector<Tensor> wq, wk, wv;  // per head: [d_model x d_k], ..., [d_model x d_v]
  Tensor wo;                       // [n_heads*d_v x d_model]
  Tensor ln1_gamma, ln1_beta;
  Tensor ff_w1, ff_b1;  // [d_model x d_ff], [d_ff]
  Tensor ff_w2, ff_b2;  // [d_ff x d_model], [d_model]
  Tensor ln2_gamma, ln2_beta;

  static BlockParams init(Rng &rng, const BlockConfig &cfg) {
    cfg.validate();
    BlockParams p;
    for (int h = 0; h < cfg.n_heads; ++h) p.wq.push_back(scaled_uniform_init(rng, cfg.d_model, cfg.d_k));
    for (int h = 0; h < cfg.n_heads; ++h) p.wk.push_back(scaled_uniform_init(rng, cfg.d_model, cfg.d_k));
    for (int h = 0; h < cfg.n_heads; ++h) p.wv.push_back(scaled_uniform_init(rng, cfg.d_model, cfg.d_v));
    p.wo = scaled_uniform_init(rng, static_cast<int64_t>(cfg.n_heads) * cfg.d_v, cfg.d_model);
    p.ln1_gamma = Tensor::full({cfg.d_model}, 1.0, true);
    p.ln1_beta = Tensor::zeros({cfg.d_model}, true);
    p.ff_w1 = scaled_uniform_init(rng, cfg.d_model, cfg.d_ff);
    p.ff_b1 = Tensor::zeros({cfg.d_ff}, true);
    p.ff_w2 = scaled_uniform_init(rng, cfg.d_ff, cfg.d_model);
    p.ff_b2 = Tensor::zeros({cfg.d_model}, true);
    p.ln2_gamma = Tensor::full({cfg.d_model}, 1.0, true);
    p.ln2_beta = Tensor::zeros({cfg.d_model}, true);
    return p;
  }

  std::vector<Tensor> all_params() const {
    std::vector<Tensor> out;
    out.insert(out.end(), wq.begin(), wq.end());
    out.insert(out.end(), wk.begin(), wk.end());
    out.insert(out.end(), wv.begin(), wv.end());
    out.insert(out.end(), {wo, ln1_gamma, ln1_beta, ff_w1, ff_b1, ff_w2, ff_b2, ln2_gamma,
                           ln2_beta});
    return out;
  }

  /// Rebuild from tensors laid out as all_params() produces them.
  static BlockParams from_flat(const BlockConfig &cfg, const std::vector<Tensor> &flat,
                               size_t &pos) {
    const size_t need = static_cast<size_t>(3 * cfg.n_heads) + 9;
    if (flat.size() - pos < need) throw DimensionError("BlockParams::from_flat: not enough tensors");
    BlockParams p;
    for (int h = 0; h < cfg.n_heads; ++h) p.wq.push_back(flat[pos++]);
    for (int h = 0; h < cfg.n_heads; ++h) p.wk.push_back(flat[pos++]);
    for (int h = 0; h < cfg.n_heads; ++h) p.wv.push_back(flat[pos++]);
    p.wo = flat[pos++];
    p.ln1_gamma = flat[pos++];
    p.ln1_beta = flat[pos++];
    p.ff_w1 = flat[pos++];
    p.ff_b1 = flat[pos++];
    p.ff_w2 = flat[pos++];
    p.ff_b2 = flat[pos++];
    p.ln2_gamma = flat[pos++];
    p.ln2_beta = flat[pos++];
    return p;
  }
};

namespace detail {

inline Tensor affine_layernorm(const Tensor &x, const Tensor &gamma, const Tensor &beta) {
  return add(mul(layernorm_lastdim(x), gamma), beta);
}

}  // namespace detail

/// One debiased attention block. `debias` is the finite per-key bias vector
/// (length T); masking folds in here, not in the caller. Optionally reports
/// each head's attention weights.
inline Tensor debiased_attention_block(const Tensor &x, const std::vector<bool> &attendable,
                                       const Tensor &debias, const BlockParams &p,
                                       const BlockConfig &cfg,
                                       std::vector<Tensor> *head_weights = nullptr) {
  if (x.ndim() != 2 || x.dim(1) != cfg.d_model) {
    throw DimensionError("attention: input must be [T x d_model], got " + shape_str(x.shape()));
  }
  const int64_t t_len = x.dim(0);
  if (static_cast<int64_t>(attendable.size()) != t_len || debias.numel() != t_len) {
    throw DimensionError("attention: input, mask and debias lengths disagree");
  }
  bool any = false;
  for (bool b : attendable) any = any || b;
  if (!any) throw ValidationError("attention: no attendable keys");

  const Tensor key_bias = masked_key_bias(debias, attendable);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(cfg.n_heads));
  for (int h = 0; h < cfg.n_heads; ++h) {
    const Tensor q = matmul(x, p.wq[static_cast<size_t>(h)]);
    const Tensor k = matmul(x, p.wk[static_cast<size_t>(h)]);
    const Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    const Tensor weights = softmax_lastdim(scores, key_bias);
    if (head_weights) head_weights->push_back(weights);
    heads.push_back(matmul(weights, matmul(x, p.wv[static_cast<size_t>(h)])));
  }
  const Tensor attn = matmul(concat(heads, 1), p.wo);
  const Tensor n1 = detail::affine_layernorm(add(x, attn), p.ln1_gamma, p.ln1_beta);
  const Tensor ff =
      add(matmul(relu(add(matmul(n1, p.ff_w1), p.ff_b1)), p.ff_w2), p.ff_b2);
  return detail::affine_layernorm(add(n1, ff), p.ln2_gamma, p.ln2_beta);
}

/// Stack of blocks; the same mask and debias vector apply at every depth.
inline Tensor debiased_attention_stack(Tensor x, const std::vector<bool> &attendable,
                                       const Tensor &debias,
                                       const std::vector<BlockParams> &blocks,
                                       const BlockConfig &cfg) {
  if (static_cast<int>(blocks.size()) != cfg.n_blocks) {
    throw DimensionError("attention stack: expected " + std::to_string(cfg.n_blocks) + " blocks");
  }
  for (const BlockParams &p : blocks) x = debiased_attention_block(x, attendable, debias, p, cfg);
  return x;
}

struct PoolParams {
  Tensor score_w;  // [d_model x 1]

  static PoolParams init(Rng &rng, int d_model) {
    PoolParams p;
    p.score_w = scaled_uniform_init(rng, d_model, 1);
    return p;
  }
};

/// Attention-weighted mean and standard deviation over attendable frames.
/// Returns [1 x 2*d]; masked frames carry exactly zero weight, so their
/// content cannot reach the statistics.
inline Tensor attentive_stats_pool(const Tensor &h, const std::vector<bool> &attendable,
                                   const PoolParams &p, Tensor *alpha_out = nullptr) {
  if (h.ndim() != 2) throw DimensionError("pooling: input must be [T x d]");
  const int64_t t_len = h.dim(0);
  if (static_cast<int64_t>(attendable.size()) != t_len) {
    throw DimensionError("pooling: mask length mismatch");
  }
  const Tensor logits = transpose(matmul(h, p.score_w));  // [1 x T]
  const Tensor mask_bias = masked_key_bias(Tensor::zeros({t_len}), attendable);
  const Tensor alpha = softmax_lastdim(logits, mask_bias);
  if (alpha_out) *alpha_out = alpha;
  const Tensor mu = matmul(alpha, h);                 // [1 x d]
  const Tensor ex2 = matmul(alpha, mul(h, h));        // weighted second moment
  const Tensor sigma = sqrt(add_scalar(sub(ex2, mul(mu, mu)), kPoolEps));
  return concat({mu, sigma}, 1);
}

}  // namespace pdaf
