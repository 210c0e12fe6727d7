#pragma once

#include <span>

#include "hasqa/tensor.hpp"

namespace hasqa {

inline constexpr double kCosineEps = 1e-12;
inline constexpr double kDefaultMargin = 0.1;

template <typename T>
struct CosineResult {
  T value;
  Vec<T> grad_u;
  Vec<T> grad_v;
};

// (u . v) / (max(|u|, eps) * max(|v|, eps)), with exact gradients.
template <typename T>
CosineResult<T> cosine(const Vec<T>& u, const Vec<T>& v);

struct HingeResult {
  double loss;
  double grad_pos;  // d loss / d s+
  double grad_neg;  // d loss / d s-
};

// max(0, margin - s_pos + s_neg); the subgradient is zero at the kink.
HingeResult hinge(double s_pos, double s_neg, double margin = kDefaultMargin);

struct TripletTerms {
  double hinge = 0.0;
  double constraint_pos = 0.0;
  double constraint_neg = 0.0;
};

// sum_i [hinge_i + delta * (constraint_pos_i + constraint_neg_i)], summed in
// index order.
double total_loss(std::span<const TripletTerms> terms, double delta);

}  // namespace hasqa
