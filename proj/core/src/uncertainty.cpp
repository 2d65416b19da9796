#include "uqlens/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "uqlens/errors.hpp"

namespace uqlens {

nlohmann::json UncertaintyReport::to_json() const {
  nlohmann::json doc;
  doc["local_linear_rmse"] = local_linear_rmse;
  doc["conformal_sd"] = conformal_sd;
  doc["conformal_iqr"] = conformal_iqr;
  doc["conformal_range"] = conformal_range;
  doc["conformal_q05"] = conformal_q05;
  doc["conformal_q95"] = conformal_q95;
  doc["sample_count"] = sample_count;
  doc["center"] = center.coords;
  doc["quantiles_reliable"] = quantiles_reliable;
  doc["surrogate_seed"] = surrogate_seed;
  doc["conformal_seed"] = conformal_seed;
  return doc;
}

double local_linear_uncertainty(const LocalSurrogate& s) {
  double wrss = 0.0;
  double sum_w = 0.0;
  for (std::size_t i = 0; i < s.residuals.size(); ++i) {
    wrss += s.weights[i] * s.residuals[i] * s.residuals[i];
    sum_w += s.weights[i];
  }
  if (!(sum_w > 0.0)) throw DegenerateError("surrogate weights sum to zero");
  return std::sqrt(wrss / sum_w);
}

double quantile_sorted(std::span<const double> sorted_values, double p) {
  if (sorted_values.empty()) throw ConfigError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  const std::size_t m = sorted_values.size();
  if (m == 1) return sorted_values[0];
  const double h = static_cast<double>(m - 1) * p + 1.0;
  std::size_t l = static_cast<std::size_t>(std::floor(h));
  if (l >= m) return sorted_values[m - 1];
  if (l < 1) l = 1;
  const double g = h - static_cast<double>(l);
  return sorted_values[l - 1] + g * (sorted_values[l] - sorted_values[l - 1]);
}

double quantile(std::span<const double> values, double p) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, p);
}

UncertaintyReport conformal_stats_from_values(const EvalPoint& center,
                                              std::span<const double> values) {
  if (values.size() < 2) {
    throw ConfigError("conformal statistics need at least 2 samples, got " +
                      std::to_string(values.size()));
  }

  const std::size_t m = values.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  UncertaintyReport report;
  report.center = center;
  report.sample_count = static_cast<int>(m);
  report.conformal_sd = std::sqrt(ss / static_cast<double>(m - 1));
  report.conformal_iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  report.conformal_range = sorted.back() - sorted.front();
  report.conformal_q05 = quantile_sorted(sorted, 0.05);
  report.conformal_q95 = quantile_sorted(sorted, 0.95);
  report.quantiles_reliable = m >= 20;
  return report;
}

UncertaintyReport conformal_stats(const Model& model, const EvalPoint& center,
                                  const PerturbationConfig& cfg) {
  validate_point(center);
  validate(cfg);
  const std::vector<EvalPoint> samples = sample_perturbations(center, cfg);
  const std::vector<double> values = eval_batch(model, samples);
  UncertaintyReport report = conformal_stats_from_values(center, values);
  report.conformal_seed = cfg.seed;
  return report;
}

}  // namespace uqlens
