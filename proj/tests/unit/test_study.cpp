#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include <nlohmann/json.hpp>

#include "uqlens/errors.hpp"
#include "uqlens/model.hpp"
#include "uqlens/study.hpp"

using namespace uqlens;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("uqlens_test_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

StudyConfig small_study(ModelKind kind, int dim, std::uint64_t seed) {
  StudyConfig cfg;
  cfg.model = ModelSpec::builtin(kind, dim, 0);
  cfg.n_points = 12;
  cfg.analysis.surrogate_samples = 40;
  cfg.analysis.conformal_samples = 20;
  cfg.analysis.replicates = 5;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("pearson correlation matches the worked example and its identities") {
  // (1,2,3) vs (1,3,2) has covariance 0.5 over variance 1: r = 0.5.
  const std::vector<double> xs{1.0, 2.0, 3.0};
  CHECK(pearson_correlation(xs, std::vector<double>{1.0, 3.0, 2.0}) ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK(pearson_correlation(xs, xs) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson_correlation(xs, std::vector<double>{-1.0, -2.0, -3.0}) ==
        doctest::Approx(-1.0).epsilon(1e-15));

  // Affine maps leave the coefficient unchanged.
  const std::vector<double> ys{0.4, -1.0, 2.2, 0.9};
  const std::vector<double> zs{1.0, 0.3, -0.2, 2.0};
  std::vector<double> ys_mapped = ys;
  for (double& v : ys_mapped) v = 3.0 * v - 7.0;
  CHECK(pearson_correlation(std::vector<double>{1.0, 2.0, 3.0, 4.0}, ys) ==
        doctest::Approx(pearson_correlation(std::vector<double>{1.0, 2.0, 3.0, 4.0}, ys_mapped))
            .epsilon(1e-12));
  (void)zs;
}

TEST_CASE("pearson correlation rejects undefined inputs") {
  const std::vector<double> xs{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(pearson_correlation(xs, std::vector<double>{1.0, 2.0}), ConfigError);
  CHECK_THROWS_AS(pearson_correlation(std::vector<double>{1.0, 2.0},
                                      std::vector<double>{3.0, 4.0}),
                  ConfigError);
  CHECK_THROWS_AS(pearson_correlation(xs, std::vector<double>{5.0, 5.0, 5.0}), DegenerateError);
  CHECK_THROWS_AS(pearson_correlation(std::vector<double>{2.0, 2.0, 2.0}, xs), DegenerateError);
}

TEST_CASE("log-linear fit recovers y = 2 + 3 log x exactly") {
  std::vector<double> xs, ys;
  for (double x : {0.1, 0.5, 1.0, 2.0, 7.0}) {
    xs.push_back(x);
    ys.push_back(2.0 + 3.0 * std::log(x));
  }
  const LogLinearFit fit = fit_log_linear(xs, ys, 1e-12);
  CHECK(fit.alpha == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit.beta == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("log-linear fit clamps x at the floor and guards degenerate inputs") {
  // Negative x values clamp to the floor instead of producing NaN.
  const LogLinearFit fit =
      fit_log_linear(std::vector<double>{-1.0, 1.0, 2.0, 3.0},
                     std::vector<double>{0.0, 1.0, 2.0, 3.0}, 1e-6);
  CHECK(std::isfinite(fit.alpha));
  CHECK(std::isfinite(fit.beta));
  CHECK(fit.r_squared >= 0.0);
  CHECK(fit.r_squared <= 1.0);

  // Constant y: slope 0 and R^2 pinned to 0.
  const LogLinearFit flat = fit_log_linear(std::vector<double>{1.0, 2.0, 3.0},
                                           std::vector<double>{4.0, 4.0, 4.0}, 1e-12);
  CHECK(flat.beta == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(flat.r_squared == 0.0);

  // Every x at the floor: the regressor is constant, the fit undefined.
  CHECK_THROWS_AS(fit_log_linear(std::vector<double>{-1.0, -2.0, -3.0},
                                 std::vector<double>{1.0, 2.0, 3.0}, 1e-6),
                  DegenerateError);
  CHECK_THROWS_AS(fit_log_linear(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0},
                                 1e-12),
                  ConfigError);
}

TEST_CASE("study sweeps are deterministic and thread-count independent") {
  StudyConfig cfg = small_study(ModelKind::radial, 3, 88);
  cfg.threads = 1;
  const StudyResult a = run_study(cfg);
  cfg.threads = 4;
  const StudyResult b = run_study(cfg);

  REQUIRE(a.per_point.size() == b.per_point.size());
  for (std::size_t i = 0; i < a.per_point.size(); ++i) {
    CHECK(a.per_point[i].index == b.per_point[i].index);
    CHECK(a.per_point[i].analysis.uncertainty.conformal_sd ==
          b.per_point[i].analysis.uncertainty.conformal_sd);
    CHECK(a.per_point[i].analysis.instability.hessian_mag ==
          b.per_point[i].analysis.instability.hessian_mag);
  }
  CHECK(a.correlations.values == b.correlations.values);

  // A different seed moves the sweep.
  StudyConfig other = small_study(ModelKind::radial, 3, 89);
  const StudyResult c = run_study(other);
  CHECK(a.per_point[0].analysis.uncertainty.conformal_sd !=
        c.per_point[0].analysis.uncertainty.conformal_sd);
}

TEST_CASE("correlation matrix is square over the published metrics with unit diagonal") {
  const StudyResult r = run_study(small_study(ModelKind::radial, 3, 5));
  const auto& names = correlation_metric_names();
  REQUIRE(r.correlations.metrics == names);
  REQUIRE(static_cast<std::size_t>(r.correlations.values.rows()) == names.size());
  REQUIRE(static_cast<std::size_t>(r.correlations.values.cols()) == names.size());

  for (Eigen::Index i = 0; i < r.correlations.values.rows(); ++i) {
    // Defined columns carry an exact unit diagonal; a degenerate (constant)
    // column's diagonal is NaN like the rest of its row.
    const double diag = r.correlations.values(i, i);
    CHECK((diag == 1.0 || std::isnan(diag)));
    for (Eigen::Index j = 0; j < r.correlations.values.cols(); ++j) {
      const double v = r.correlations.values(i, j);
      const double t = r.correlations.values(j, i);
      CHECK(((std::isnan(v) && std::isnan(t)) || v == t));
      if (std::isfinite(v)) CHECK(std::abs(v) <= 1.0);
    }
  }
}

TEST_CASE("a linear model yields NaN columns for exactly constant metrics") {
  // Every replicate of an affine model recovers the same slope ordering, so the
  // top-k sets agree and jaccard is exactly 1 at every point: a constant column
  // whose correlations are undefined, even against itself. The hessian columns
  // carry solver noise (~1e-32) rather than an exact constant, so they stay
  // defined and no point is flagged degenerate.
  const StudyResult r = run_study(small_study(ModelKind::linear, 3, 44));
  const auto& names = r.correlations.metrics;
  const auto col = [&](const std::string& n) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == n) return static_cast<Eigen::Index>(i);
    }
    REQUIRE(false);
    return Eigen::Index{0};
  };

  CHECK(std::isnan(r.correlations.values(col("jaccard_topk"), col("conformal_sd"))));
  CHECK(std::isnan(r.correlations.values(col("jaccard_topk"), col("jaccard_topk"))));
  CHECK(r.correlations.values(col("conformal_sd"), col("conformal_sd")) == 1.0);
  CHECK(r.hessian_degenerate_points == 0);
  CHECK(r.failed_points == 0);

  // rmse sits at the log floor for every point: the hessian fit's regressor is
  // constant, so only the conformal/lipschitz fit can survive.
  REQUIRE(!r.fits.empty());
  for (const LogLinearFit& fit : r.fits) {
    CHECK(fit.x_metric == "conformal_sd");
  }
}

TEST_CASE("study validates its configuration") {
  StudyConfig cfg = small_study(ModelKind::radial, 2, 1);
  cfg.n_points = 5;
  CHECK_THROWS_AS(run_study(cfg), ConfigError);

  cfg = small_study(ModelKind::radial, 2, 1);
  cfg.log_floor = 0.0;
  CHECK_THROWS_AS(run_study(cfg), ConfigError);

  cfg = small_study(ModelKind::radial, 2, 1);
  cfg.threads = -1;
  CHECK_THROWS_AS(run_study(cfg), ConfigError);
}

TEST_CASE("point metric lookup applies aliases and the log transform") {
  const StudyResult r = run_study(small_study(ModelKind::radial, 3, 23));
  const PointRecord& rec = r.per_point.front();
  CHECK(point_metric(rec, "lipschitz", r.log_floor) ==
        rec.analysis.instability.lipschitz_fd_mean);
  CHECK(point_metric(rec, "jaccard_topk", r.log_floor) == rec.analysis.instability.jaccard_avg);
  CHECK(point_metric(rec, "conformal_sd", r.log_floor) ==
        rec.analysis.uncertainty.conformal_sd);
  CHECK(point_metric(rec, "log_local_linear_rmse", r.log_floor) ==
        std::log(std::max(rec.analysis.uncertainty.local_linear_rmse, r.log_floor)));
  CHECK_THROWS_AS(point_metric(rec, "no_such_metric", r.log_floor), ConfigError);
}

TEST_CASE("scatter files carry one row per point and a fit sidecar") {
  TempDir dir("scatter");
  const StudyResult r = run_study(small_study(ModelKind::radial, 3, 31));
  const std::string path = (dir.path / "scatter.csv").string();
  emit_scatter(r, "local_linear_rmse", "hessian_mag", path);

  const std::string csv = slurp(path);
  std::istringstream lines(csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == r.per_point.size() + 1);
  CHECK(rows.front() == "local_linear_rmse,hessian_mag");

  const auto sidecar = nlohmann::json::parse(slurp(path + ".fit.json"));
  CHECK(sidecar.at("points").get<int>() == static_cast<int>(r.per_point.size()));
  REQUIRE(sidecar.contains("fit"));
  if (!sidecar.at("fit").is_null()) {
    CHECK(sidecar.at("fit").contains("alpha"));
    CHECK(sidecar.at("fit").contains("beta"));
    CHECK(sidecar.at("fit").contains("r_squared"));
    CHECK(sidecar.at("fit").at("x_metric").get<std::string>() == "local_linear_rmse");
  }
}

TEST_CASE("study table writers produce parseable, shape-correct files") {
  TempDir dir("writers");
  const StudyResult r = run_study(small_study(ModelKind::sigmoid_network, 3, 77));

  const std::string per_point = (dir.path / "per_point.csv").string();
  write_per_point_csv(r, per_point);
  std::istringstream pp(slurp(per_point));
  std::string header;
  REQUIRE(std::getline(pp, header));
  CHECK(header.rfind("index,x0,x1,x2,", 0) == 0);
  CHECK(header.find("hessian_degenerate") != std::string::npos);
  std::size_t data_rows = 0;
  std::string row;
  while (std::getline(pp, row)) ++data_rows;
  CHECK(data_rows == r.per_point.size());

  const std::string corr = (dir.path / "correlations.csv").string();
  write_correlations_csv(r, corr);
  std::istringstream cc(slurp(corr));
  REQUIRE(std::getline(cc, header));
  CHECK(header.rfind("metric,", 0) == 0);

  const std::string fits = (dir.path / "fits.json").string();
  write_fits_json(r, fits);
  const auto fits_doc = nlohmann::json::parse(slurp(fits));
  REQUIRE(fits_doc.contains("fits"));
  for (const auto& f : fits_doc.at("fits")) {
    CHECK(f.contains("x_metric"));
    CHECK(f.contains("y_metric"));
    CHECK(f.contains("alpha"));
    CHECK(f.contains("beta"));
    CHECK(f.contains("r_squared"));
    CHECK(f.contains("log_floor"));
  }
}

#ifdef UQLENS_EXT_STUB
TEST_CASE("hessian-degenerate points are excluded only from hessian pairs") {
  // A hinge model, exactly flat below its fold, splits the sweep into three
  // regimes: points sampled entirely inside the flat region fit all-zero
  // slopes (degenerate), points entirely on the linear side fit a constant
  // unit slope, and points straddling the fold produce genuine slope spread.
  StudyConfig cfg;
  cfg.model.kind = ModelKind::external;
  cfg.model.dimension = 1;
  cfg.model.params = ExternalModelConfig{{UQLENS_EXT_STUB, "relu", "0"}, 10000};
  cfg.n_points = 30;
  cfg.analysis.sigma_pert = 0.05;  // keeps far points clear of the fold
  cfg.analysis.surrogate_samples = 40;
  cfg.analysis.conformal_samples = 20;
  cfg.analysis.replicates = 5;
  cfg.analysis.topk = 1;
  cfg.seed = 3;
  cfg.threads = 1;

  const StudyResult r = run_study(cfg);
  REQUIRE(r.failed_points == 0);
  // The sweep must actually mix regimes for the exclusion to matter.
  REQUIRE(r.hessian_degenerate_points > 0);
  REQUIRE(r.hessian_degenerate_points < static_cast<int>(r.per_point.size()));

  // Degenerate points really are the flat-region ones: all-zero slopes.
  for (const PointRecord& rec : r.per_point) {
    if (rec.analysis.instability.hessian_degenerate) {
      CHECK(rec.analysis.surrogate.beta.norm() == 0.0);
      CHECK(rec.analysis.instability.hessian_overall == 0.0);
    }
  }

  const auto& names = r.correlations.metrics;
  const auto col = [&](const std::string& n) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == n) return static_cast<Eigen::Index>(i);
    }
    REQUIRE(false);
    return Eigen::Index{0};
  };

  // Recompute both conventions by hand: hessian pairs drop degenerate rows,
  // every other pair keeps the full sweep.
  std::vector<double> hmag_kept, conf_kept, conf_all, lip_all, hmag_all;
  for (const PointRecord& rec : r.per_point) {
    conf_all.push_back(rec.analysis.uncertainty.conformal_sd);
    lip_all.push_back(rec.analysis.instability.lipschitz_fd_mean);
    hmag_all.push_back(rec.analysis.instability.hessian_mag);
    if (!rec.analysis.instability.hessian_degenerate) {
      hmag_kept.push_back(rec.analysis.instability.hessian_mag);
      conf_kept.push_back(rec.analysis.uncertainty.conformal_sd);
    }
  }

  const double matrix_hessian = r.correlations.values(col("hessian_mag"), col("conformal_sd"));
  CHECK(matrix_hessian == pearson_correlation(hmag_kept, conf_kept));
  CHECK(matrix_hessian != pearson_correlation(hmag_all, conf_all));

  const double matrix_plain = r.correlations.values(col("lipschitz"), col("conformal_sd"));
  CHECK(matrix_plain == pearson_correlation(lip_all, conf_all));
}
#endif
