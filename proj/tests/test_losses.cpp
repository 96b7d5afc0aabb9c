#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "exum/losses.hpp"

using namespace exum;

namespace {

// Local central difference, independent of the library helpers.
template <typename F>
double central_diff(F f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double rel_gap(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_CASE("qp loss matches hand-computed values", "[losses]") {
  const LossBundle b = qp_loss(0.8, 0.5, 0.2);
  CHECK(b.main == Catch::Approx(0.045).margin(1e-15));
  CHECK(b.total == b.main);
  REQUIRE(b.d_p.size() == 1);
  REQUIRE(b.d_c.size() == 1);
  CHECK(b.d_p[0] == Catch::Approx(0.15).margin(1e-15));
  CHECK(b.d_c[0] == Catch::Approx(0.18).margin(1e-15));

  const LossBundle zero = qp_loss(0.4, 0.7, 0.4);
  CHECK(zero.main == 0.0);
  CHECK(zero.d_p[0] == 0.0);
  CHECK(zero.d_c[0] == 0.0);
}

TEST_CASE("qp loss equals squared error of the blend", "[losses]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < 1000; ++i) {
    const double p = u(rng), c = u(rng), y = u(rng);
    const Vec pb = blend({p}, {c}, {y}, ConfidenceMode::Single);
    const double direct = 0.5 * (pb[0] - y) * (pb[0] - y);
    CHECK(qp_loss(p, c, y).main == Catch::Approx(direct).margin(1e-15));
  }
}

TEST_CASE("blend stays between prediction and label", "[losses]") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double p = u(rng), c = u(rng), y = u(rng);
    const double pb = blend({p}, {c}, {y}, ConfidenceMode::Single)[0];
    CHECK(pb >= std::min(p, y) - 1e-15);
    CHECK(pb <= std::max(p, y) + 1e-15);
  }
  CHECK(blend({0.3}, {1.0}, {0.9}, ConfidenceMode::Single)[0] == 0.3);
  CHECK(blend({0.3}, {0.0}, {0.9}, ConfidenceMode::Single)[0] == 0.9);
}

TEST_CASE("shape and mode errors are rejected", "[losses]") {
  CHECK_THROWS_AS(blend({0.5}, {0.5}, {0.5}, ConfidenceMode::MultiHead),
                  ConfigError);
  CHECK_THROWS_AS(blend({0.5, 0.5}, {0.5}, {0.5}, ConfidenceMode::Single),
                  ShapeError);
  CHECK_THROWS_AS(blend({0.5, 0.5}, {0.5}, {0.5, 0.5}, ConfidenceMode::MultiHead),
                  ShapeError);
  CHECK_THROWS_AS(or_loss({0.5}, {0.5}, {1, 0}, ConfidenceMode::Single),
                  ShapeError);
  CHECK_THROWS_AS(combined_loss(Backbone::QP, ConfidenceMode::MultiHead,
                                {0.5, 0.5}, {0.5, 0.5}, {0.5}, {}, 0.1),
                  ConfigError);
  CHECK_THROWS_AS(combined_loss_qp(0.5, 0.5, 0.5, -0.1), ConfigError);
}

TEST_CASE("ordinal loss matches hand-computed values", "[losses]") {
  SECTION("positive label") {
    const LossBundle b = or_loss({0.5}, {0.5}, {1}, ConfidenceMode::Single);
    // blend = 0.75
    CHECK(b.main == Catch::Approx(-std::log(0.75)).margin(1e-15));
    CHECK(b.d_p[0] == Catch::Approx(-2.0 / 3.0).margin(1e-12));
    CHECK(b.d_c[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK_FALSE(b.saturated);
  }
  SECTION("negative label") {
    const LossBundle b = or_loss({0.5}, {0.5}, {0}, ConfidenceMode::Single);
    // blend = 0.25
    CHECK(b.main == Catch::Approx(-std::log(0.75)).margin(1e-15));
    CHECK(b.d_p[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(b.d_c[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));
  }
  SECTION("single confidence sums what multi-head splits") {
    const LossBundle multi =
        or_loss({0.5, 0.5}, {0.5, 0.5}, {1, 0}, ConfidenceMode::MultiHead);
    REQUIRE(multi.d_c.size() == 2);
    CHECK(multi.d_c[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(multi.d_c[1] == Catch::Approx(2.0 / 3.0).margin(1e-12));
    const LossBundle single =
        or_loss({0.5, 0.5}, {0.5}, {1, 0}, ConfidenceMode::Single);
    REQUIRE(single.d_c.size() == 1);
    CHECK(single.d_c[0] == Catch::Approx(4.0 / 3.0).margin(1e-12));
    CHECK(single.main == Catch::Approx(multi.main).margin(1e-15));
  }
}

TEST_CASE("saturated blend keeps loss finite and zeroes the gradient",
          "[losses]") {
  const LossBundle b =
      or_loss({1.0 - 1e-5}, {0.5}, {1}, ConfidenceMode::Single);
  CHECK_FALSE(b.saturated);  // blend = 1 - 5e-6, inside the clamp

  const LossBundle sat =
      or_loss({1.0 - 1e-6}, {1e-3}, {0}, ConfidenceMode::Single);
  // blend ~ 1e-3 * (1 - 1e-6), fine; push the other way
  CHECK_FALSE(sat.saturated);

  const LossBundle hard = or_loss({1.0 - 1e-7}, {0.5}, {1},
                                  ConfidenceMode::Single);
  // blend = 1 - 5e-8 lands above the clamp ceiling
  CHECK(hard.saturated);
  CHECK(std::isfinite(hard.main));
  CHECK(hard.d_p[0] == 0.0);
  CHECK(hard.d_c[0] == 0.0);
}

TEST_CASE("adversarial loss matches hand-computed values", "[losses]") {
  const AdversarialLoss a = adversarial_loss({0.5});
  CHECK(a.value == Catch::Approx(std::log(2.0)).margin(1e-15));
  CHECK(a.d_c[0] == Catch::Approx(-2.0).margin(1e-15));
  const AdversarialLoss e = adversarial_loss({std::exp(-1.0)});
  CHECK(e.value == Catch::Approx(1.0).margin(1e-12));
  CHECK(e.d_c[0] == Catch::Approx(-std::exp(1.0)).margin(1e-12));
  const AdversarialLoss multi = adversarial_loss({0.5, 0.25});
  CHECK(multi.value == Catch::Approx(std::log(8.0)).margin(1e-12));
  CHECK(multi.d_c[0] == Catch::Approx(-2.0).margin(1e-15));
  CHECK(multi.d_c[1] == Catch::Approx(-4.0).margin(1e-15));
  CHECK(adversarial_loss({2.0}).saturated);
}

TEST_CASE("combined loss adds the weighted adversarial term", "[losses]") {
  const LossBundle b = combined_loss_qp(0.8, 0.5, 0.2, 0.1);
  CHECK(b.main == Catch::Approx(0.045).margin(1e-15));
  CHECK(b.adversarial == Catch::Approx(std::log(2.0)).margin(1e-15));
  CHECK(b.total == Catch::Approx(0.045 + 0.1 * std::log(2.0)).margin(1e-15));
  CHECK(b.lambda == 0.1);
  CHECK(b.d_c[0] == Catch::Approx(0.18 - 0.2).margin(1e-12));
  CHECK(b.d_p[0] == Catch::Approx(0.15).margin(1e-15));
}

TEST_CASE("qp gradients agree with finite differences", "[losses]") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  int tested = 0;
  while (tested < 1000) {
    const double p = u(rng), c = u(rng), y = u(rng);
    if (std::abs(p - y) < 0.05) continue;
    ++tested;
    const LossBundle b = qp_loss(p, c, y);
    const double fd_p =
        central_diff([&](double x) { return qp_loss(x, c, y).main; }, p);
    const double fd_c =
        central_diff([&](double x) { return qp_loss(p, x, y).main; }, c);
    REQUIRE(rel_gap(fd_p, b.d_p[0]) < 1e-6);
    REQUIRE(rel_gap(fd_c, b.d_c[0]) < 1e-6);
  }
}

TEST_CASE("ordinal gradients agree with finite differences", "[losses]") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::uniform_int_distribution<int> bit(0, 1);
  for (ConfidenceMode mode :
       {ConfidenceMode::Single, ConfidenceMode::MultiHead}) {
    for (int rep = 0; rep < 1000; ++rep) {
      const size_t heads = 4;
      Vec p(heads), c(confidence_count(mode, heads));
      OrdinalLabelVector y(heads);
      for (double& v : p) v = u(rng);
      for (double& v : c) v = u(rng);
      for (auto& v : y) v = static_cast<uint8_t>(bit(rng));
      const LossBundle b = or_loss(p, c, y, mode);
      for (size_t t = 0; t < heads; ++t) {
        const double fd = central_diff(
            [&](double x) {
              Vec pp = p;
              pp[t] = x;
              return or_loss(pp, c, y, mode).main;
            },
            p[t]);
        REQUIRE(rel_gap(fd, b.d_p[t]) < 1e-6);
      }
      for (size_t m = 0; m < c.size(); ++m) {
        const double fd = central_diff(
            [&](double x) {
              Vec cc = c;
              cc[m] = x;
              return or_loss(p, cc, y, mode).main;
            },
            c[m]);
        REQUIRE(rel_gap(fd, b.d_c[m]) < 1e-6);
      }
    }
  }
}

TEST_CASE("combined gradients agree with finite differences", "[losses]") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::uniform_real_distribution<double> lam(0.001, 0.3);
  std::uniform_int_distribution<int> bit(0, 1);
  int tested = 0;
  while (tested < 1000) {
    const double lambda = lam(rng);
    if (bit(rng)) {
      const double p = u(rng), c = u(rng), y = u(rng);
      const LossBundle b = combined_loss_qp(p, c, y, lambda);
      if (std::abs(b.d_c[0]) < 1e-3) continue;  // near the balance point
      const double fd = central_diff(
          [&](double x) { return combined_loss_qp(p, x, y, lambda).total; }, c);
      REQUIRE(rel_gap(fd, b.d_c[0]) < 1e-6);
    } else {
      Vec p(3), c{u(rng)};
      OrdinalLabelVector y(3);
      for (double& v : p) v = u(rng);
      for (auto& v : y) v = static_cast<uint8_t>(bit(rng));
      const LossBundle b =
          combined_loss_or(p, c, y, ConfidenceMode::Single, lambda);
      if (std::abs(b.d_c[0]) < 1e-3) continue;
      const double fd = central_diff(
          [&](double x) {
            return combined_loss_or(p, {x}, y, ConfidenceMode::Single, lambda)
                .total;
          },
          c[0]);
      REQUIRE(rel_gap(fd, b.d_c[0]) < 1e-6);
    }
    ++tested;
  }
}

TEST_CASE("without the adversarial term confidence can only fall", "[losses]") {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  std::uniform_int_distribution<int> bit(0, 1);
  for (int i = 0; i < 2000; ++i) {
    const double p = u(rng), c = u(rng);
    CHECK(combined_loss_qp(p, c, u(rng), 0.0).d_c[0] >= 0.0);
    const OrdinalLabelVector y = {static_cast<uint8_t>(bit(rng))};
    CHECK(combined_loss_or({p}, {c}, y, ConfidenceMode::Single, 0.0).d_c[0] >=
          0.0);
  }
}

TEST_CASE("closed-form confidence gradient matches the loss gradients",
          "[losses]") {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::uniform_real_distribution<double> lam(0.001, 0.5);
  for (int i = 0; i < 500; ++i) {
    const double c = u(rng), lambda = lam(rng);
    {
      const double p = u(rng), y = u(rng);
      const double eps = std::abs(p - y);
      const double from_loss = combined_loss_qp(p, c, y, lambda).d_c[0];
      CHECK(confidence_gradient(Backbone::QP, eps, c, lambda) ==
            Catch::Approx(from_loss).margin(1e-12));
    }
    {
      const double p = u(rng);
      const OrdinalLabelVector y1 = {1};
      const double eps1 = 1.0 - p;
      const double from_loss =
          combined_loss_or({p}, {c}, y1, ConfidenceMode::Single, lambda).d_c[0];
      CHECK(confidence_gradient(Backbone::OR, eps1, c, lambda) ==
            Catch::Approx(from_loss).margin(1e-12));
      const OrdinalLabelVector y0 = {0};
      const double from_loss0 =
          combined_loss_or({p}, {c}, y0, ConfidenceMode::Single, lambda).d_c[0];
      CHECK(confidence_gradient(Backbone::OR, p, c, lambda) ==
            Catch::Approx(from_loss0).margin(1e-12));
    }
  }
}

TEST_CASE("fixed points match hand-computed values", "[losses]") {
  const FixedPointResult qp = fixed_point(Backbone::QP, 0.5, 0.01);
  REQUIRE(qp.interior);
  CHECK(qp.c_star == Catch::Approx(0.2).margin(1e-15));

  const FixedPointResult orr = fixed_point(Backbone::OR, 0.5, 0.1);
  REQUIRE(orr.interior);
  CHECK(orr.c_star == Catch::Approx(0.1 / (0.5 * 1.1)).margin(1e-15));

  const FixedPointResult above = fixed_point(Backbone::QP, 0.5, 16.0);
  CHECK_FALSE(above.interior);

  CHECK(lambda_validity_bound(Backbone::QP, 0.5) == Catch::Approx(0.25));
  CHECK(lambda_validity_bound(Backbone::OR, 0.5) == Catch::Approx(1.0));
  CHECK_THROWS_AS(fixed_point(Backbone::QP, 0.5, 0.0), ConfigError);
  CHECK_THROWS_AS(lambda_validity_bound(Backbone::QP, 0.0), ConfigError);
}

TEST_CASE("interior fixed points zero the confidence gradient", "[losses]") {
  std::mt19937_64 rng(26);
  std::uniform_real_distribution<double> ue(0.05, 0.95);
  std::uniform_real_distribution<double> ur(0.05, 0.9);
  for (int i = 0; i < 500; ++i) {
    const double eps = ue(rng);
    for (Backbone b : {Backbone::QP, Backbone::OR}) {
      const double lambda = ur(rng) * lambda_validity_bound(b, eps);
      const FixedPointResult fp = fixed_point(b, eps, lambda);
      REQUIRE(fp.interior);
      CHECK(std::abs(confidence_gradient(b, eps, fp.c_star, lambda)) < 1e-9);
    }
  }
}
