#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "hasqa/errors.hpp"
#include "hasqa/objective.hpp"
#include "support.hpp"

using namespace hasqa;
using namespace hasqa::testing;

TEST_CASE("cosine examples") {
  Vec<double> u(2), v(2);
  u << 1, 1;
  v << 1, 0;
  CHECK(cosine(u, v).value == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(cosine(u, u).value == doctest::Approx(1.0));
  Vec<double> e1(2), e2(2);
  e1 << 1, 0;
  e2 << 0, 1;
  CHECK(cosine(e1, e2).value == 0.0);
  CHECK_THROWS_AS(cosine(u, Vec<double>(3)), UsageError);
}

TEST_CASE("cosine guards zero vectors") {
  const auto r = cosine<double>(Vec<double>::Zero(3), Vec<double>::Ones(3));
  CHECK(r.value == 0.0);
  CHECK(r.grad_u.allFinite());
  CHECK(r.grad_v.allFinite());
}

TEST_CASE("cosine bounds, scale invariance and gradients") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int t = 0; t < 50; ++t) {
    auto u = random_vector<double>(7, rng);
    auto v = random_vector<double>(7, rng);
    const auto r = cosine(u, v);
    CHECK(std::abs(r.value) <= 1.0 + 1e-12);
    const double a = scale(rng);
    CHECK(std::abs(cosine<double>(a * u, v).value - r.value) <= 1e-6);
    CHECK(std::abs(cosine<double>(u, a * v).value - r.value) <= 1e-6);
    CHECK(std::abs(cosine<double>(-u, v).value + r.value) <= 1e-12);

    auto f = [&] { return cosine(u, v).value; };
    CHECK(relative_error(flatten(r.grad_u), numeric_gradient(u.data(), 7, f)) < 1e-6);
    CHECK(relative_error(flatten(r.grad_v), numeric_gradient(v.data(), 7, f)) < 1e-6);
    CHECK(std::abs(r.grad_u.dot(u)) < 1e-10);  // scale invariance in gradient form
  }
}

TEST_CASE("hinge examples and subgradients") {
  const auto satisfied = hinge(0.9, 0.5, 0.1);
  CHECK(satisfied.loss == 0.0);
  CHECK(satisfied.grad_pos == 0.0);
  CHECK(satisfied.grad_neg == 0.0);

  const auto active = hinge(0.5, 0.45, 0.1);
  CHECK(active.loss == doctest::Approx(0.05));
  CHECK(active.grad_pos == -1.0);
  CHECK(active.grad_neg == 1.0);

  const auto tie = hinge(0.3, 0.3);
  CHECK(tie.loss == doctest::Approx(0.1));

  // Exactly at the kink: argument 0, zero subgradient.
  const auto kink = hinge(0.5, 0.0, 0.5);
  CHECK(kink.loss == 0.0);
  CHECK(kink.grad_pos == 0.0);
  CHECK(kink.grad_neg == 0.0);

  CHECK_THROWS_AS(hinge(0.1, 0.2, 0.0), UsageError);
  CHECK_THROWS_AS(hinge(0.1, 0.2, -0.1), UsageError);
}

TEST_CASE("hinge is nonnegative") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> s(-1.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const auto r = hinge(s(rng), s(rng));
    CHECK(r.loss >= 0.0);
  }
}

TEST_CASE("total_loss examples") {
  const std::array<TripletTerms, 1> one{{{0.05, 2.0, 3.0}}};
  CHECK(total_loss(one, 1e-6) == doctest::Approx(0.050005).epsilon(1e-12));

  const std::array<TripletTerms, 3> many{{{0.05, 2.0, 3.0}, {0.0, 1.0, 1.0}, {0.2, 0.5, 0.0}}};
  CHECK(total_loss(many, 0.0) == doctest::Approx(0.25));
  const std::array<TripletTerms, 2> binary{{{0.05, 0.0, 0.0}, {0.2, 0.0, 0.0}}};
  CHECK(total_loss(binary, 1e-4) == doctest::Approx(0.25));
  CHECK(total_loss(std::span<const TripletTerms>{}, 1.0) == 0.0);
}
