#pragma once

#include <vector>

#include "hasqa/hashing.hpp"
#include "hasqa/tensor.hpp"

namespace hasqa {

template <typename T>
struct AttentionParams {
  Mat<T> wq;  // M x D
  Mat<T> wa;  // M x D
  Vec<T> m;   // M
};

// In place: exp(x_i - max) / sum over unmasked i; masked entries become 0.
template <typename T>
void masked_softmax(Vec<T>& logits, const Mask& mask);

template <typename T>
struct PoolResult {
  Vec<T> value;
  std::vector<Eigen::Index> argmax;  // first maximizing column per row
};

// Per-row max over unmasked columns.
template <typename T>
PoolResult<T> max_pool(const Mat<T>& h, const Mask& mask);

// Routes each output gradient to its argmax cell.
template <typename T>
Mat<T> max_pool_backward(const Vec<T>& grad, const PoolResult<T>& pool, Eigen::Index cols);

template <typename T>
struct AttentionResult {
  Vec<T> value;   // v^a, D
  Vec<T> alpha;   // L, zero at masked positions
  Mat<T> hidden;  // M x L, tanh(Wa b_i + Wq vq); kept for backward
};

// alpha_i = softmax_i(m . tanh(Wa b_i + Wq vq)) over unmasked i;
// value = sum_i alpha_i b_i.
template <typename T>
AttentionResult<T> attend(const Mat<T>& b, const Vec<T>& vq, const AttentionParams<T>& p,
                          const Mask& mask);

template <typename T>
struct AttentionGrad {
  Mat<T> b;
  Vec<T> vq;
};

// Accumulates parameter gradients into grads; returns input gradients.
template <typename T>
AttentionGrad<T> attend_backward(const Vec<T>& grad_value, const Mat<T>& b, const Vec<T>& vq,
                                 const AttentionParams<T>& p, const Mask& mask,
                                 const AttentionResult<T>& fwd, AttentionParams<T>& grads);

// Serve-time attention over a bit-packed answer. For +/-1 columns,
// Wa b = 2 * (sum of Wa columns at set bits) - (row sums of Wa), so only
// set bits are visited. Row sums are computed once per parameter set and the
// question projection once per question.
class BinaryAttention {
 public:
  explicit BinaryAttention(const AttentionParams<float>& p);

  // Wq vq, reusable across every answer for one question.
  Vec<float> project_question(const Vec<float>& vq) const;

  AttentionResult<float> operator()(const BinaryMatrix& code, const Vec<float>& question_proj,
                                    const Mask& mask) const;

  Eigen::Index width() const { return wa_.cols(); }

 private:
  Mat<float> wq_;
  Mat<float> wa_;
  Vec<float> m_;
  Vec<float> row_sums_;
};

AttentionResult<float> binary_attend_fast(const BinaryMatrix& code, const Vec<float>& vq,
                                          const AttentionParams<float>& p, const Mask& mask);

}  // namespace hasqa
