#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "uqlens/analysis.hpp"
#include "uqlens/model.hpp"
#include "uqlens/sampling.hpp"
#include "uqlens/uncertainty.hpp"

namespace uqlens {

enum class GateMetric { local_linear_rmse, conformal_sd };

std::string to_string(GateMetric metric);
GateMetric gate_metric_from_string(const std::string& name);

// Accept/fallback policy: per-forecast-value threshold bands over [lo, hi),
// with a default threshold outside every band.
struct GatePolicy {
  struct Band {
    double lo = 0.0;
    double hi = 0.0;
    double threshold = 0.0;
  };

  GateMetric metric = GateMetric::local_linear_rmse;
  std::vector<Band> bands;  // non-overlapping, ordered by lo
  double default_threshold = 0.0;

  void validate() const;
  double threshold_for(double forecast) const;

  nlohmann::json to_json() const;
  static GatePolicy from_json(const nlohmann::json& doc);
};

// Affine model on standardized features, the simple stand-in used when the
// primary model's pointwise uncertainty is too high.
struct FallbackModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  StandardizationStats training_stats;

  double predict(const EvalPoint& x) const;

  nlohmann::json to_json() const;
  static FallbackModel from_json(const nlohmann::json& doc);
};

// Ordinary least-squares affine fit on standardized features.
// Requires rows >= dimension + 2 and no zero-variance feature.
FallbackModel fit_fallback(std::span<const EvalPoint> features, std::span<const double> targets);

enum class ForecastSource { primary, fallback };

std::string to_string(ForecastSource source);

struct GateDecision {
  double forecast = 0.0;
  ForecastSource source = ForecastSource::primary;
  double uncertainty = 0.0;
  double threshold_applied = 0.0;
  UncertaintyReport diagnostics;
  double primary_forecast = 0.0;
  double fallback_forecast = 0.0;

  nlohmann::json to_json() const;
};

// Computes the primary forecast and the policy metric at x, then routes to the
// fallback prediction iff the metric exceeds the threshold for the primary
// forecast's value band. Evaluation failures propagate as errors; the fallback
// is a modeling decision, not an error handler.
GateDecision decide(const Model& model, const FallbackModel& fallback, const GatePolicy& policy,
                    const EvalPoint& x, const AnalysisConfig& cfg);

struct RegionProbe {
  EvalPoint point;
  double forecast = 0.0;
  double metric = 0.0;
  double threshold = 0.0;
  bool exceeded = false;
};

struct RegionMap {
  std::vector<RegionProbe> probes;
  std::vector<std::pair<std::size_t, std::string>> failures;  // probe index, message
  std::size_t exceed_count = 0;
  double exceed_fraction = 0.0;  // over successfully probed points

  nlohmann::json to_json() const;
};

// Pointwise sweep of the policy metric over probe points; evaluation failures
// are counted separately from exceedances.
RegionMap map_unforecastable_region(const Model& model, const GatePolicy& policy,
                                    std::span<const EvalPoint> probes, const AnalysisConfig& cfg);

}  // namespace uqlens
