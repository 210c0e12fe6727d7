#include "hasqa/hashing.hpp"

#include <cmath>
#include <string>

#include "hasqa/errors.hpp"

namespace hasqa {

BinaryMatrix::BinaryMatrix(std::uint32_t rows, std::uint32_t cols)
    : rows_(rows), cols_(cols), bytes_(payload_size(rows, cols), 0) {}

BinaryMatrix::BinaryMatrix(std::uint32_t rows, std::uint32_t cols,
                           std::vector<std::uint8_t> payload)
    : rows_(rows), cols_(cols), bytes_(std::move(payload)) {
  const std::size_t want = payload_size(rows, cols);
  if (bytes_.size() != want) {
    throw FormatError(std::min(bytes_.size(), want),
                      "payload is " + std::to_string(bytes_.size()) + " bytes, expected " +
                          std::to_string(want));
  }
  const std::size_t used = static_cast<std::size_t>(rows) * cols;
  if (used % 8 != 0) {
    const auto pad_mask = static_cast<std::uint8_t>(0xFFu << (used % 8));
    if (bytes_.back() & pad_mask) {
      throw FormatError(bytes_.size() - 1, "nonzero pad bits");
    }
  }
}

void BinaryMatrix::set(std::size_t row, std::size_t col, bool positive) {
  const std::size_t k = row * cols_ + col;
  const auto m = static_cast<std::uint8_t>(1u << (k & 7));
  if (positive) {
    bytes_[k >> 3] |= m;
  } else {
    bytes_[k >> 3] &= static_cast<std::uint8_t>(~m);
  }
}

template <typename T>
Mat<T> BinaryMatrix::to_dense() const {
  return unpack_bits<T>(bytes_, rows_, cols_);
}

template <typename T>
Mat<T> soft_binarize(const Mat<T>& h, double beta) {
  if (!(beta >= 1.0)) throw UsageError("beta must be >= 1, got " + std::to_string(beta));
  if (!h.allFinite()) throw NumericError("soft_binarize: non-finite input");
  return (h.array() * static_cast<T>(beta)).tanh().matrix();
}

template <typename T>
Mat<T> soft_binarize_backward(const Mat<T>& b, const Mat<T>& grad_b, double beta) {
  if (b.rows() != grad_b.rows() || b.cols() != grad_b.cols()) {
    throw UsageError("soft_binarize_backward: shape mismatch");
  }
  return (grad_b.array() * static_cast<T>(beta) * (T(1) - b.array().square())).matrix();
}

template <typename T>
BinaryMatrix hard_binarize(const Mat<T>& b) {
  if (!b.allFinite()) throw NumericError("hard_binarize: non-finite input");
  BinaryMatrix out(static_cast<std::uint32_t>(b.rows()), static_cast<std::uint32_t>(b.cols()));
  for (Eigen::Index d = 0; d < b.rows(); ++d) {
    for (Eigen::Index l = 0; l < b.cols(); ++l) {
      if (b(d, l) >= T(0)) out.set(static_cast<std::size_t>(d), static_cast<std::size_t>(l), true);
    }
  }
  return out;
}

template <typename T>
ConstraintLoss<T> binary_constraint_loss(const Mat<T>& b, const BinaryMatrix& code) {
  if (b.rows() != code.rows() || b.cols() != code.cols()) {
    throw UsageError("binary_constraint_loss: shape mismatch");
  }
  const Mat<T> diff = b - code.to_dense<T>();
  return {diff.squaredNorm(), T(2) * diff};
}

template <typename T>
std::vector<std::uint8_t> pack_bits(const Mat<T>& signs) {
  std::vector<std::uint8_t> out(BinaryMatrix::payload_size(signs.rows(), signs.cols()), 0);
  std::size_t k = 0;
  for (Eigen::Index d = 0; d < signs.rows(); ++d) {
    for (Eigen::Index l = 0; l < signs.cols(); ++l, ++k) {
      const T v = signs(d, l);
      if (v == T(1)) {
        out[k >> 3] |= static_cast<std::uint8_t>(1u << (k & 7));
      } else if (v != T(-1)) {
        throw UsageError("pack_bits: element (" + std::to_string(d) + ", " + std::to_string(l) +
                         ") is not +1 or -1");
      }
    }
  }
  return out;
}

template <typename T>
Mat<T> unpack_bits(std::span<const std::uint8_t> payload, std::size_t rows, std::size_t cols) {
  const std::size_t want = BinaryMatrix::payload_size(rows, cols);
  if (payload.size() != want) {
    throw FormatError(std::min(payload.size(), want),
                      "payload is " + std::to_string(payload.size()) + " bytes, expected " +
                          std::to_string(want));
  }
  Mat<T> out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t k = 0;
  for (std::size_t d = 0; d < rows; ++d) {
    for (std::size_t l = 0; l < cols; ++l, ++k) {
      out(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(l)) =
          ((payload[k >> 3] >> (k & 7)) & 1u) ? T(1) : T(-1);
    }
  }
  return out;
}

#define HASQA_INSTANTIATE(T)                                                               \
  template Mat<T> BinaryMatrix::to_dense<T>() const;                                       \
  template Mat<T> soft_binarize(const Mat<T>&, double);                                    \
  template Mat<T> soft_binarize_backward(const Mat<T>&, const Mat<T>&, double);            \
  template BinaryMatrix hard_binarize(const Mat<T>&);                                      \
  template ConstraintLoss<T> binary_constraint_loss(const Mat<T>&, const BinaryMatrix&);   \
  template std::vector<std::uint8_t> pack_bits(const Mat<T>&);                             \
  template Mat<T> unpack_bits(std::span<const std::uint8_t>, std::size_t, std::size_t);

HASQA_INSTANTIATE(float)
HASQA_INSTANTIATE(double)
#undef HASQA_INSTANTIATE

}  // namespace hasqa
