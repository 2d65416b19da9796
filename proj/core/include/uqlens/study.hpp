#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uqlens/analysis.hpp"
#include "uqlens/model.hpp"

namespace uqlens {

struct StudyConfig {
  ModelSpec model;
  int n_points = 200;  // >= 10
  AnalysisConfig analysis;  // analysis.seed is ignored; per-point seeds derive from `seed`
  std::uint64_t seed = 0;
  double log_floor = 1e-12;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct PointRecord {
  int index = 0;  // original sweep index; gaps mark excluded failures
  PointAnalysis analysis;
};

// Pearson matrix over the study metric columns; NaN marks undefined entries
// (a constant column, or too few rows after degenerate-point exclusion).
struct CorrelationMatrix {
  std::vector<std::string> metrics;
  Eigen::MatrixXd values;
};

struct LogLinearFit {
  std::string x_metric;
  std::string y_metric;
  double alpha = 0.0;
  double beta = 0.0;
  double r_squared = 0.0;
};

struct StudyResult {
  std::vector<PointRecord> per_point;
  CorrelationMatrix correlations;
  std::vector<LogLinearFit> fits;
  int requested_points = 0;
  int failed_points = 0;
  int hessian_degenerate_points = 0;
  std::vector<std::string> failures;
  double log_floor = 1e-12;
};

// Sweeps n_points i.i.d. N(0, I) evaluation points, runs the full per-point
// diagnosis at each, and assembles the correlation matrix and the two
// canonical log-linear fits. Throws StudyError when more than 10% of the
// points fail to evaluate.
StudyResult run_study(const StudyConfig& cfg);

// Sample Pearson coefficient. Throws ConfigError for mismatched lengths or
// fewer than 3 pairs, DegenerateError when either series has zero variance
// (the correlation is undefined). run_study maps those to NaN matrix entries.
double pearson_correlation(std::span<const double> xs, std::span<const double> ys);

// Ordinary least squares of y on log(max(x, log_floor)). R^2 is defined as 0
// when y is constant; a constant regressor (every x at the floor) throws
// DegenerateError. Metric names in the result are left empty.
LogLinearFit fit_log_linear(std::span<const double> xs, std::span<const double> ys,
                            double log_floor);

// Correlation-table column names, in output order.
const std::vector<std::string>& correlation_metric_names();

// Per-point metric lookup by column name (accepts the correlation-table names
// "lipschitz" and "jaccard_topk" as well as the report field names).
double point_metric(const PointRecord& rec, const std::string& metric, double log_floor);

// Two-column CSV of (x_metric, y_metric) plus a "<path>.fit.json" sidecar with
// the log-linear fit of y on x.
void emit_scatter(const StudyResult& result, const std::string& x_metric,
                  const std::string& y_metric, const std::string& path);

void write_per_point_csv(const StudyResult& result, const std::string& path);
void write_correlations_csv(const StudyResult& result, const std::string& path);
void write_fits_json(const StudyResult& result, const std::string& path);

}  // namespace uqlens
