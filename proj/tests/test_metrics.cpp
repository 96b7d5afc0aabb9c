#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "exum/metrics.hpp"

using namespace exum;

TEST_CASE("mae averages absolute errors", "[metrics]") {
  CHECK(mae({1.0, 2.0, 3.0}, {2.0, 2.0, 5.0}) == Catch::Approx(1.0));
  CHECK(mae({4.0}, {4.0}) == 0.0);
  CHECK_THROWS_AS(mae({1.0}, {1.0, 2.0}), UsageError);
  CHECK_THROWS_AS(mae({}, {}), UsageError);
}

TEST_CASE("xauc rewards concordant orderings", "[metrics]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  Vec truth(1000);
  for (double& t : truth) t = u(rng);

  SECTION("identical ordering scores one") {
    CHECK(xauc(truth, truth, 100000, 17) == 1.0);
    Vec scaled = truth;
    for (double& t : scaled) t = 2.0 * t + 5.0;
    CHECK(xauc(scaled, truth, 100000, 17) == 1.0);
  }

  SECTION("reversed ordering scores near zero") {
    Vec reversed = truth;
    for (double& t : reversed) t = -t;
    // Only self-pairs score; they appear once in a thousand draws.
    CHECK(xauc(reversed, truth, 100000, 17) == Catch::Approx(0.0).margin(0.01));
  }

  SECTION("unrelated predictions score one half") {
    // Enough samples that the true concordance of one random draw sits well
    // inside the tolerance, not just the pair-sampling error.
    std::mt19937_64 rng2(4);
    Vec big_truth(20000), other(20000);
    for (double& t : big_truth) t = u(rng2);
    for (double& t : other) t = u(rng2);
    CHECK(xauc(other, big_truth, 100000, 17) ==
          Catch::Approx(0.5).margin(0.01));
  }
}

TEST_CASE("xauc tie handling scores half", "[metrics]") {
  // Two samples, tied predictions, distinct truths: every cross pair gets
  // half credit, every self pair full credit.
  const double v = xauc({1.0, 1.0}, {0.0, 1.0}, 200000, 5);
  CHECK(v == Catch::Approx(0.75).margin(0.01));
  const double all_tied = xauc({1.0, 1.0}, {2.0, 2.0}, 1000, 5);
  CHECK(all_tied == 1.0);
}

TEST_CASE("xauc is deterministic in the seed", "[metrics]") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec pred(500), truth(500);
  for (double& x : pred) x = u(rng);
  for (double& x : truth) x = u(rng);
  CHECK(xauc(pred, truth, 5000, 11) == xauc(pred, truth, 5000, 11));
  CHECK(xauc(pred, truth, 5000, 11) != xauc(pred, truth, 5000, 12));
  CHECK_THROWS_AS(xauc({1.0}, {1.0}, 10, 1), UsageError);
  CHECK_THROWS_AS(xauc(pred, truth, 0, 1), UsageError);
}

TEST_CASE("metric rows serialize in a fixed layout", "[metrics]") {
  MetricsReport r;
  r.model = "exum_or";
  r.dataset = "test";
  r.mae = 1.5;
  r.xauc = 0.625;
  r.samples = 10000;
  r.pairs = 100000;
  r.seed = 7;
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  write_metrics_row(os, r);
  CHECK(os.str() ==
        "model,dataset,mae,xauc,samples,pairs,seed\n"
        "exum_or,test,1.5,0.625,10000,100000,7\n");
}
