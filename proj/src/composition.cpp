#include "hasqa/composition.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "hasqa/errors.hpp"

namespace hasqa {

namespace {

void check_mask(const Mask& mask, Eigen::Index cols, const char* op) {
  if (static_cast<Eigen::Index>(mask.size()) != cols) {
    throw UsageError(std::string(op) + ": mask length " + std::to_string(mask.size()) +
                     " != columns " + std::to_string(cols));
  }
  if (count_valid(mask) == 0) throw UsageError(std::string(op) + ": all positions masked");
}

template <typename T>
void check_attention_shapes(Eigen::Index rows, const Vec<T>& vq, const AttentionParams<T>& p) {
  const Eigen::Index M = p.m.size();
  if (M < 1 || p.wa.rows() != M || p.wq.rows() != M || p.wa.cols() != rows ||
      p.wq.cols() != vq.size()) {
    throw UsageError("attend: attention parameter shapes do not match inputs");
  }
}

}  // namespace

template <typename T>
void masked_softmax(Vec<T>& logits, const Mask& mask) {
  check_mask(mask, logits.size(), "masked_softmax");
  T mx = -std::numeric_limits<T>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) mx = std::max(mx, logits[i]);
  }
  T sum = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    logits[i] = mask[static_cast<std::size_t>(i)] ? std::exp(logits[i] - mx) : T(0);
    sum += logits[i];
  }
  logits /= sum;
}

template <typename T>
PoolResult<T> max_pool(const Mat<T>& h, const Mask& mask) {
  check_mask(mask, h.cols(), "max_pool");
  PoolResult<T> out{Vec<T>(h.rows()), std::vector<Eigen::Index>(static_cast<std::size_t>(h.rows()), -1)};
  for (Eigen::Index d = 0; d < h.rows(); ++d) {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < h.cols(); ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || h(d, i) > h(d, best)) best = i;
    }
    out.value[d] = h(d, best);
    out.argmax[static_cast<std::size_t>(d)] = best;
  }
  return out;
}

template <typename T>
Mat<T> max_pool_backward(const Vec<T>& grad, const PoolResult<T>& pool, Eigen::Index cols) {
  if (grad.size() != pool.value.size()) throw UsageError("max_pool_backward: shape mismatch");
  Mat<T> out = Mat<T>::Zero(grad.size(), cols);
  for (Eigen::Index d = 0; d < grad.size(); ++d) {
    out(d, pool.argmax[static_cast<std::size_t>(d)]) += grad[d];
  }
  return out;
}

template <typename T>
AttentionResult<T> attend(const Mat<T>& b, const Vec<T>& vq, const AttentionParams<T>& p,
                          const Mask& mask) {
  check_mask(mask, b.cols(), "attend");
  check_attention_shapes(b.rows(), vq, p);
  AttentionResult<T> out;
  out.hidden = ((p.wa * b).colwise() + p.wq * vq).array().tanh().matrix();
  out.alpha = out.hidden.transpose() * p.m;
  masked_softmax(out.alpha, mask);
  out.value = b * out.alpha;
  return out;
}

template <typename T>
AttentionGrad<T> attend_backward(const Vec<T>& grad_value, const Mat<T>& b, const Vec<T>& vq,
                                 const AttentionParams<T>& p, const Mask& mask,
                                 const AttentionResult<T>& fwd, AttentionParams<T>& grads) {
  if (grad_value.size() != b.rows() || fwd.alpha.size() != b.cols()) {
    throw UsageError("attend_backward: shape mismatch");
  }
  const Vec<T> d_alpha = b.transpose() * grad_value;
  const T dot = fwd.alpha.dot(d_alpha);
  Vec<T> d_logit = (fwd.alpha.array() * (d_alpha.array() - dot)).matrix();
  for (Eigen::Index i = 0; i < d_logit.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) d_logit[i] = 0;
  }
  grads.m.noalias() += fwd.hidden * d_logit;
  // d_pre(:, i) = d_logit_i * m .* (1 - hidden_i^2)
  const Mat<T> d_pre =
      ((p.m * d_logit.transpose()).array() * (T(1) - fwd.hidden.array().square())).matrix();
  grads.wa.noalias() += d_pre * b.transpose();
  const Vec<T> d_pre_sum = d_pre.rowwise().sum();
  grads.wq.noalias() += d_pre_sum * vq.transpose();

  AttentionGrad<T> out;
  out.b = grad_value * fwd.alpha.transpose() + p.wa.transpose() * d_pre;
  out.vq = p.wq.transpose() * d_pre_sum;
  return out;
}

BinaryAttention::BinaryAttention(const AttentionParams<float>& p)
    : wq_(p.wq), wa_(p.wa), m_(p.m), row_sums_(p.wa.rowwise().sum()) {
  if (m_.size() < 1 || wa_.rows() != m_.size() || wq_.rows() != m_.size()) {
    throw UsageError("BinaryAttention: inconsistent attention parameters");
  }
}

Vec<float> BinaryAttention::project_question(const Vec<float>& vq) const {
  if (vq.size() != wq_.cols()) throw UsageError("BinaryAttention: question width mismatch");
  return wq_ * vq;
}

AttentionResult<float> BinaryAttention::operator()(const BinaryMatrix& code,
                                                   const Vec<float>& question_proj,
                                                   const Mask& mask) const {
  const auto D = static_cast<Eigen::Index>(code.rows());
  const auto L = static_cast<Eigen::Index>(code.cols());
  check_mask(mask, L, "binary_attend_fast");
  if (D != wa_.cols() || question_proj.size() != m_.size()) {
    throw UsageError("binary_attend_fast: code shape does not match attention parameters");
  }

  // set_sum(:, l) = sum of Wa columns d with bit (d, l) set. Bits of row d
  // occupy payload positions [d*L, d*L + L); walk them a word at a time.
  Mat<float> set_sum = Mat<float>::Zero(m_.size(), L);
  const auto bytes = code.bytes();
  const auto nbits = static_cast<std::size_t>(D) * static_cast<std::size_t>(L);
  for (std::size_t start = 0; start < nbits; start += 64) {
    std::uint64_t word = 0;
    const std::size_t first_byte = start >> 3;
    const std::size_t nbytes = std::min<std::size_t>(8, bytes.size() - first_byte);
    for (std::size_t k = 0; k < nbytes; ++k) {
      word |= static_cast<std::uint64_t>(bytes[first_byte + k]) << (8 * k);
    }
    while (word) {
      const std::size_t bit = start + static_cast<std::size_t>(std::countr_zero(word));
      word &= word - 1;
      const auto d = static_cast<Eigen::Index>(bit / static_cast<std::size_t>(L));
      const auto l = static_cast<Eigen::Index>(bit % static_cast<std::size_t>(L));
      set_sum.col(l) += wa_.col(d);
    }
  }

  AttentionResult<float> out;
  out.hidden = ((2.0f * set_sum).colwise() - row_sums_).colwise() + question_proj;
  out.hidden = out.hidden.array().tanh().matrix();
  out.alpha = out.hidden.transpose() * m_;
  masked_softmax(out.alpha, mask);

  // v_d = sum_l alpha_l (2 bit - 1) = 2 * (alpha mass at set bits) - 1.
  const float total = out.alpha.sum();
  out.value.resize(D);
  for (Eigen::Index d = 0; d < D; ++d) {
    float acc = 0.0f;
    for (Eigen::Index l = 0; l < L; ++l) {
      if (code.bit(static_cast<std::size_t>(d), static_cast<std::size_t>(l))) acc += out.alpha[l];
    }
    out.value[d] = 2.0f * acc - total;
  }
  return out;
}

AttentionResult<float> binary_attend_fast(const BinaryMatrix& code, const Vec<float>& vq,
                                          const AttentionParams<float>& p, const Mask& mask) {
  const BinaryAttention attention(p);
  return attention(code, attention.project_question(vq), mask);
}

#define HASQA_INSTANTIATE(T)                                                                   \
  template void masked_softmax(Vec<T>&, const Mask&);                                          \
  template PoolResult<T> max_pool(const Mat<T>&, const Mask&);                                 \
  template Mat<T> max_pool_backward(const Vec<T>&, const PoolResult<T>&, Eigen::Index);        \
  template AttentionResult<T> attend(const Mat<T>&, const Vec<T>&, const AttentionParams<T>&,  \
                                     const Mask&);                                             \
  template AttentionGrad<T> attend_backward(const Vec<T>&, const Mat<T>&, const Vec<T>&,       \
                                            const AttentionParams<T>&, const Mask&,            \
                                            const AttentionResult<T>&, AttentionParams<T>&);

HASQA_INSTANTIATE(float)
HASQA_INSTANTIATE(double)
#undef HASQA_INSTANTIATE

}  // namespace hasqa
