#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "hasqa/tensor.hpp"

namespace hasqa::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hasqa-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

template <typename T>
Mat<T> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                     double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
  return m;
}

template <typename T>
Vec<T> random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  return random_matrix<T>(n, 1, rng, scale);
}

// Norm-based relative error between two gradient arrays.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / denom;
}

// Central differences of f over every entry of x.
template <typename F>
std::vector<double> numeric_gradient(double* x, std::size_t n, F&& f, double step = 1e-5) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f();
    x[i] = saved - step;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline std::vector<double> flatten(const Mat<double>& m) {
  return {m.data(), m.data() + m.size()};
}

}  // namespace hasqa::testing
