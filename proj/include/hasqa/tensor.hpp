#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace hasqa {

// Column-major dense matrices; for feature matrices, column i holds the
// feature vector of token i.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using RealMatrix = Mat<float>;

// true = real token, false = padding.
using Mask = std::vector<bool>;

inline std::size_t count_valid(const Mask& mask) {
  std::size_t n = 0;
  for (bool b : mask) n += b ? 1 : 0;
  return n;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace hasqa
