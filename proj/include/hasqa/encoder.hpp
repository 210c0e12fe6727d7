#pragma once

#include <cstdint>
#include <vector>

#include "hasqa/data.hpp"
#include "hasqa/tensor.hpp"

namespace hasqa {

// Word + learned positional embeddings. Stored E x V and E x L so each
// column is one token's vector; row/column 0 of the table is PAD and stays
// zero.
template <typename T>
struct EmbeddingParams {
  Mat<T> table;       // E x V
  Mat<T> positional;  // E x L
};

enum class Activation : std::uint32_t { kTanh = 0, kIdentity = 1 };

// One post-norm block:
//   hidden = LN1(H + SelfAttention(H))
//   out    = LN2(hidden + W2 act(W1 hidden + b1) + b2)
// with single-head scaled dot-product attention and per-column LayerNorm.
template <typename T>
struct EncoderLayer {
  Mat<T> wq, wk, wv;  // D x D
  Mat<T> w1;          // F x D
  Vec<T> b1;          // F
  Mat<T> w2;          // D x F
  Vec<T> b2;          // D
  Vec<T> ln1_gain, ln1_bias;  // D
  Vec<T> ln2_gain, ln2_bias;  // D
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct EncoderParams {
  Mat<T> input_proj;  // D x E; empty when E == D
  std::vector<EncoderLayer<T>> layers;
  Activation activation = Activation::kTanh;
  // Without LayerNorm a block is H + attention followed by the residual
  // feed-forward; the ln_* tensors are then unused.
  bool layer_norm = true;
};

// Column i = table[ids[i]] + positional[i] for real tokens, zero for PAD.
template <typename T>
Mat<T> embed(const TokenSequence& seq, const EmbeddingParams<T>& p);

// Accumulates into grads (which must be shaped like p).
template <typename T>
void embed_backward(const TokenSequence& seq, const Mat<T>& grad_out,
                    EmbeddingParams<T>& grads);

template <typename T>
struct EncoderLayerCache {
  Mat<T> input;  // H
  Mat<T> q, k, v;
  Mat<T> attn;     // L x L, row i = weights of query i over keys
  Mat<T> norm1;    // normalized H + attention output (empty without LayerNorm) (empty without LayerNorm)
  Vec<T> inv_std1;  // per column
  Mat<T> hidden;   // LN1 output
  Mat<T> act;      // activation(W1 hidden + b1)
  Mat<T> norm2;
  Vec<T> inv_std2;
};

template <typename T>
struct EncoderCache {
  Mat<T> input;  // E x L
  Mask mask;
  std::vector<EncoderLayerCache<T>> layers;
  Mat<T> output;
};

// Maps E x L to D x L. Padding keys get -inf logits, so masked columns never
// influence real outputs.
template <typename T>
Mat<T> encode(const Mat<T>& x, const Mask& mask, const EncoderParams<T>& p,
              EncoderCache<T>* cache = nullptr);

// Exact reverse mode for encode. Accumulates parameter gradients into
// grads and returns the gradient w.r.t. the input x.
template <typename T>
Mat<T> encode_backward(const Mat<T>& grad_out, const EncoderCache<T>& cache,
                       const EncoderParams<T>& p, EncoderParams<T>& grads);

}  // namespace hasqa
