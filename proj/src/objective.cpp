#include "hasqa/objective.hpp"

#include <algorithm>
#include <cmath>

#include "hasqa/errors.hpp"

namespace hasqa {

template <typename T>
CosineResult<T> cosine(const Vec<T>& u, const Vec<T>& v) {
  if (u.size() != v.size()) throw UsageError("cosine: length mismatch");
  const T eps = static_cast<T>(kCosineEps);
  const T raw_nu = u.norm();
  const T raw_nv = v.norm();
  const T nu = std::max(raw_nu, eps);
  const T nv = std::max(raw_nv, eps);
  const T dot = u.dot(v);
  const T s = dot / (nu * nv);
  CosineResult<T> out{s, v / (nu * nv), u / (nu * nv)};
  // The norm only depends on the vector when it is above the guard.
  if (raw_nu > eps) out.grad_u -= (s / (nu * nu)) * u;
  if (raw_nv > eps) out.grad_v -= (s / (nv * nv)) * v;
  return out;
}

HingeResult hinge(double s_pos, double s_neg, double margin) {
  if (!(margin > 0.0)) throw UsageError("hinge: margin must be > 0");
  const double arg = margin - s_pos + s_neg;
  if (arg > 0.0) return {arg, -1.0, 1.0};
  return {0.0, 0.0, 0.0};
}

double total_loss(std::span<const TripletTerms> terms, double delta) {
  double j = 0.0;
  for (const auto& t : terms) j += t.hinge + delta * (t.constraint_pos + t.constraint_neg);
  return j;
}

template CosineResult<float> cosine(const Vec<float>&, const Vec<float>&);
template CosineResult<double> cosine(const Vec<double>&, const Vec<double>&);

}  // namespace hasqa
