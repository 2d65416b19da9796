#include <cmath>
#include <cstdint>
#include <set>

#include "doctest.h"

#include "uqlens/errors.hpp"
#include "uqlens/sampling.hpp"

using namespace uqlens;

TEST_CASE("derive_seed is deterministic and stream-separating") {
  CHECK(derive_seed(42, 0) == derive_seed(42, 0));
  CHECK(derive_seed(42, 0) != derive_seed(42, 1));
  CHECK(derive_seed(42, 0) != derive_seed(43, 0));

  // No collisions across a modest fan-out from one base seed.
  std::set<std::uint64_t> seen;
  for (std::uint64_t stream = 0; stream < 10000; ++stream) {
    seen.insert(derive_seed(7, stream));
  }
  CHECK(seen.size() == 10000);
}

TEST_CASE("perturbation config validation") {
  PerturbationConfig cfg;
  CHECK_NOTHROW(validate(cfg));

  PerturbationConfig bad = cfg;
  bad.sigma_pert = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad.sigma_pert = -1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = cfg;
  bad.kernel_sigma = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = cfg;
  bad.count = 1;
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = cfg;
  bad.count = 5;
  CHECK_NOTHROW(validate(bad));
  CHECK_THROWS_AS(validate(bad, 4), ConfigError);  // needs >= dim + 2 = 6
  CHECK_NOTHROW(validate(bad, 3));
}

TEST_CASE("sample_perturbations shape, determinism, and moments") {
  const EvalPoint center({1.0, -2.0, 0.5});
  PerturbationConfig cfg;
  cfg.sigma_pert = 0.3;
  cfg.count = 20000;
  cfg.seed = 99;

  const auto samples = sample_perturbations(center, cfg);
  REQUIRE(samples.size() == 20000);
  for (const auto& s : samples) REQUIRE(s.dimension() == 3);

  const auto again = sample_perturbations(center, cfg);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(samples[i].coords == again[i].coords);
  }

  PerturbationConfig other = cfg;
  other.seed = 100;
  CHECK(sample_perturbations(center, other).front().coords != samples.front().coords);

  for (int d = 0; d < 3; ++d) {
    double mean = 0.0;
    for (const auto& s : samples) mean += s.coords[static_cast<std::size_t>(d)];
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (const auto& s : samples) {
      const double diff = s.coords[static_cast<std::size_t>(d)] - mean;
      var += diff * diff;
    }
    var /= static_cast<double>(samples.size() - 1);
    CHECK(mean == doctest::Approx(center.coords[static_cast<std::size_t>(d)]).epsilon(0.02));
    CHECK(std::sqrt(var) == doctest::Approx(0.3).epsilon(0.03));
  }
}

TEST_CASE("kernel weights follow exp(-d^2 / sigma^2)") {
  const EvalPoint center({0.0, 0.0});
  std::vector<EvalPoint> samples;
  samples.push_back(center);                     // distance 0
  samples.push_back(EvalPoint({1.0, 0.0}));      // distance 1
  samples.push_back(EvalPoint({3.0, 4.0}));      // distance 5

  const auto w = kernel_weights(center, samples, 1.0);
  REQUIRE(w.size() == 3);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == doctest::Approx(0.36787944117144233).epsilon(1e-15));
  CHECK(w[2] == doctest::Approx(std::exp(-25.0)).epsilon(1e-12));

  // Doubling sigma quarters the exponent.
  const auto wide = kernel_weights(center, samples, 2.0);
  CHECK(wide[1] == doctest::Approx(std::exp(-0.25)).epsilon(1e-15));

  for (double v : w) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }

  CHECK_THROWS_AS(kernel_weights(center, samples, 0.0), ConfigError);
}

TEST_CASE("standardize hits sample mean 0 and sample SD 1") {
  // Single column (0, 2): mean 1, sample SD sqrt(2), outputs -+1/sqrt(2).
  std::vector<EvalPoint> rows = {EvalPoint({0.0}), EvalPoint({2.0})};
  const auto [standardized, stats] = standardize(rows);

  REQUIRE(stats.means.size() == 1);
  CHECK(stats.means[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(stats.deviations[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(standardized[0].coords[0] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(standardized[1].coords[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));

  SUBCASE("round trip") {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const EvalPoint back = stats.invert(standardized[i]);
      CHECK(back.coords[0] == doctest::Approx(rows[i].coords[0]).epsilon(1e-14));
    }
  }
}

TEST_CASE("standardize on a larger block") {
  std::vector<EvalPoint> rows;
  for (int i = 0; i < 7; ++i) {
    rows.push_back(EvalPoint({static_cast<double>(i), 10.0 - 3.0 * i}));
  }
  const auto [standardized, stats] = standardize(rows);

  for (int d = 0; d < 2; ++d) {
    double mean = 0.0;
    for (const auto& r : standardized) mean += r.coords[static_cast<std::size_t>(d)];
    mean /= 7.0;
    double var = 0.0;
    for (const auto& r : standardized) {
      const double diff = r.coords[static_cast<std::size_t>(d)] - mean;
      var += diff * diff;
    }
    var /= 6.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("standardize rejects degenerate input") {
  std::vector<EvalPoint> constant_col = {EvalPoint({1.0, 5.0}), EvalPoint({2.0, 5.0}),
                                         EvalPoint({3.0, 5.0})};
  CHECK_THROWS_WITH_AS(standardize(constant_col),
                       "standardize: column 1 has zero variance", DegenerateError);

  std::vector<EvalPoint> single = {EvalPoint({1.0})};
  CHECK_THROWS_AS(standardize(single), ConfigError);

  std::vector<EvalPoint> ragged = {EvalPoint({1.0, 2.0}), EvalPoint({1.0})};
  CHECK_THROWS_AS(standardize(ragged), DimensionError);
}
