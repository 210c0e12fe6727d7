#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hasqa/tensor.hpp"

namespace hasqa {

// D x L matrix over {+1, -1}, one bit per element. Bit k of the payload is
// element (d, l) with k = d * L + l (row-major), LSB-first within each byte;
// bit set means +1. Trailing pad bits are zero.
class BinaryMatrix {
 public:
  BinaryMatrix() = default;
  // All elements -1.
  BinaryMatrix(std::uint32_t rows, std::uint32_t cols);
  // Validates length and pad bits; throws FormatError.
  BinaryMatrix(std::uint32_t rows, std::uint32_t cols, std::vector<std::uint8_t> payload);

  static std::size_t payload_size(std::size_t rows, std::size_t cols) {
    return (rows * cols + 7) / 8;
  }

  std::uint32_t rows() const { return rows_; }
  std::uint32_t cols() const { return cols_; }
  std::span<const std::uint8_t> bytes() const { return bytes_; }
  std::size_t payload_bytes() const { return bytes_.size(); }

  bool bit(std::size_t row, std::size_t col) const {
    const std::size_t k = row * cols_ + col;
    return (bytes_[k >> 3] >> (k & 7)) & 1u;
  }
  int sign(std::size_t row, std::size_t col) const { return bit(row, col) ? 1 : -1; }
  void set(std::size_t row, std::size_t col, bool positive);

  template <typename T>
  Mat<T> to_dense() const;

  bool operator==(const BinaryMatrix&) const = default;

 private:
  std::uint32_t rows_ = 0;
  std::uint32_t cols_ = 0;
  std::vector<std::uint8_t> bytes_;
};

// Elementwise tanh(beta * h). beta must be >= 1.
template <typename T>
Mat<T> soft_binarize(const Mat<T>& h, double beta);

// Gradient w.r.t. h given b = soft_binarize(h): grad_b * beta * (1 - b^2).
template <typename T>
Mat<T> soft_binarize_backward(const Mat<T>& b, const Mat<T>& grad_b, double beta);

// Elementwise sign with sgn(0) = +1.
template <typename T>
BinaryMatrix hard_binarize(const Mat<T>& b);

template <typename T>
struct ConstraintLoss {
  T value;
  Mat<T> grad;  // d value / d b = 2 (b - code)
};

// ||b - code||_F^2.
template <typename T>
ConstraintLoss<T> binary_constraint_loss(const Mat<T>& b, const BinaryMatrix& code);

// Input entries must be exactly +1 or -1 (UsageError otherwise).
template <typename T>
std::vector<std::uint8_t> pack_bits(const Mat<T>& signs);

// Payload length must equal ceil(rows * cols / 8) (FormatError otherwise).
template <typename T>
Mat<T> unpack_bits(std::span<const std::uint8_t> payload, std::size_t rows, std::size_t cols);

}  // namespace hasqa
