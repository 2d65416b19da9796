#pragma once

#include <cstdint>
#include <limits>
#include <span>

#include <nlohmann/json.hpp>

#include "uqlens/model.hpp"
#include "uqlens/sampling.hpp"
#include "uqlens/surrogate.hpp"

namespace uqlens {

struct UncertaintyReport {
  double local_linear_rmse = std::numeric_limits<double>::quiet_NaN();
  double conformal_sd = 0.0;
  double conformal_iqr = 0.0;
  double conformal_range = 0.0;
  double conformal_q05 = 0.0;
  double conformal_q95 = 0.0;
  int sample_count = 0;           // conformal replicate count
  EvalPoint center;
  bool quantiles_reliable = true; // false when the conformal sample is below 20
  std::uint64_t surrogate_seed = 0;
  std::uint64_t conformal_seed = 0;

  nlohmann::json to_json() const;
};

// Weighted RMSE of the surrogate residuals: sqrt(sum w r^2 / sum w).
double local_linear_uncertainty(const LocalSurrogate& s);

// Empirical quantile by linear interpolation between closest order statistics:
// with sorted y(1)..y(M), Q_p = y(l) + g (y(l+1) - y(l)), h = (M-1)p + 1,
// l = floor(h), g = h - l.
double quantile_sorted(std::span<const double> sorted_values, double p);
double quantile(std::span<const double> values, double p);  // copies and sorts

// Dispersion statistics of precomputed predictions at perturbed inputs.
UncertaintyReport conformal_stats_from_values(const EvalPoint& center,
                                              std::span<const double> values);

// Samples cfg.count perturbations, evaluates the model, and summarizes the
// prediction spread (SD, IQR, range, 90% quantile interval).
UncertaintyReport conformal_stats(const Model& model, const EvalPoint& center,
                                  const PerturbationConfig& cfg);

}  // namespace uqlens
