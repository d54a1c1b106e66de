// From-scratch transformer encoder with explicit forward and backward
// passes: token embeddings + sinusoidal positions, pre-norm self-attention
// and feed-forward blocks, inverted dropout, and a finite-difference
// gradient check used by the test suite.
#pragma once

#include <cstdint>
#include <vector>

#include "dfl/tensor.hpp"

namespace dfl {

struct EncoderConfig {
  int num_layers = 2;
  int num_heads = 8;
  int d_model = 128;
  int d_ff = 0;  // 0 means 4 * d_model
  double dropout_rate = 0.1;
  int max_len = 256;
  int vocab_size = 0;  // 0 until bound to a vocabulary

  int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  int head_dim() const { return d_model / num_heads; }
  // d_model divisible by num_heads, dims >= 1, dropout in [0, 1).
  // vocab_size may stay 0 here; parameter init requires it to be set.
  void validate() const;
};

struct LayerParams {
  Mat Wq, Wk, Wv, Wo;      // d_model x d_model
  Vec bq, bk, bv, bo;      // d_model
  Mat W1, W2;              // d_model x d_ff, d_ff x d_model
  Vec b1, b2;              // d_ff, d_model
  Vec ln1_g, ln1_b;        // pre-attention layer norm
  Vec ln2_g, ln2_b;        // pre-feed-forward layer norm
};

struct EncoderParams {
  EncoderConfig cfg;
  Mat embedding;  // vocab_size x d_model
  Mat pos_table;  // max_len x d_model, sinusoidal, not trained
  std::vector<LayerParams> layers;

  // Xavier weights, zero biases, unit layer-norm gains.
  static EncoderParams init(const EncoderConfig& cfg, Rng& rng);

  // Trainable tensors in a fixed order: embedding, then per layer
  // Wq bq Wk bk Wv bv Wo bo W1 b1 W2 b2 ln1_g ln1_b ln2_g ln2_b.
  // The positional table is deliberately absent.
  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;
};

struct EncoderGrads {
  Mat embedding;
  std::vector<LayerParams> layers;

  static EncoderGrads zeros_like(const EncoderParams& params);
  void add(const EncoderGrads& other);
  void scale(double factor);
  void set_zero();  // in place, storage (and TensorRef pointers) kept
  std::vector<TensorRef> tensors();  // same order and names as EncoderParams
};

// Everything the backward pass needs from one forward call.
struct EncoderCache {
  struct Layer {
    Mat x_in;                 // residual stream entering the layer
    Mat ln1_hat;              // normalized rows before gain/bias
    Vec ln1_rstd;             // per-row 1/sqrt(var + eps)
    Mat q, k, v;              // projected, heads still packed
    std::vector<Mat> attn;    // per-head attention weights, rows sum to 1 or 0
    Mat ctx;                  // concatenated head outputs before Wo
    Mat attn_drop;            // inverted-dropout multipliers (empty when off)
    Mat x_mid;                // after the attention residual
    Mat ln2_hat;
    Vec ln2_rstd;
    Mat ff_pre;               // W1 x + b1
    Mat ff_act;               // gelu(ff_pre)
    Mat ff_drop;
  };
  std::vector<int> ids;
  std::vector<uint8_t> mask;
  bool train_mode = false;
  Mat emb_drop;
  Mat x0;  // embeddings + positions after dropout
  std::vector<Layer> layers;
  Mat h;   // final hidden states, n x d_model
};

// Contextual representation of one sentence. `mask[i] == 0` marks padding:
// such keys receive exactly zero attention weight everywhere and such query
// rows get an all-zero attention output. `rng` is only consulted when
// train_mode is set and dropout_rate > 0.
const Mat& encoder_forward(const EncoderParams& params, const std::vector<int>& ids,
                           const std::vector<uint8_t>& mask, bool train_mode, Rng* rng,
                           EncoderCache& cache);

// Accumulates into `grads`. Rows of dH at padded positions are ignored, so
// padding contributes exactly zero gradient everywhere.
void encoder_backward(const EncoderParams& params, const EncoderCache& cache, const Mat& dH,
                      EncoderGrads& grads);

// Worst-case relative error between analytic gradients of sum(H) and central
// finite differences, over all trainable tensors. Dropout is forced off.
double grad_check_encoder(const EncoderConfig& cfg, uint64_t seed);

}  // namespace dfl
