#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "uqlens/model.hpp"
#include "uqlens/sampling.hpp"
#include "uqlens/surrogate.hpp"

namespace uqlens {

// Surrogates refitted at perturbed copies of one query point, slopes stacked row-wise.
struct ReplicateEnsemble {
  EvalPoint center;
  std::vector<EvalPoint> replicate_centers;
  std::vector<LocalSurrogate> surrogates;
  Eigen::MatrixXd slope_matrix;  // row m = surrogates[m].beta
};

struct FiniteDifferenceMode {
  enum class Stat { mean, max, quantile };
  Stat stat = Stat::mean;
  double quantile_p = 0.5;

  static FiniteDifferenceMode mean() { return {Stat::mean, 0.0}; }
  static FiniteDifferenceMode max() { return {Stat::max, 0.0}; }
  static FiniteDifferenceMode quantile(double p) { return {Stat::quantile, p}; }
};

// Pairwise |f(x_j) - f(x_k)| / ||x_j - x_k|| over all sample pairs, reduced by
// the requested statistic. Pairs closer than 1e-12 are skipped; throws
// DegenerateError when no pair survives.
double lipschitz_finite_difference(std::span<const EvalPoint> samples,
                                   std::span<const double> values, FiniteDifferenceMode mode);
double lipschitz_finite_difference(const Model& model, std::span<const EvalPoint> samples,
                                   FiniteDifferenceMode mode);

// Average pairwise Jaccard index of the top-k feature sets (by |beta|, ties
// broken toward the lowest feature index) across the ensemble replicates.
double jaccard_topk(const ReplicateEnsemble& ensemble, int k);

struct HessianInstability {
  double magnitude = 0.0;           // tr(slope covariance) / mean squared slope
  double magnitude_stability = 1.0; // 1 / (1 + magnitude)
  double coupling = 0.0;            // off-diagonal Frobenius fraction of the slope covariance
  double coupling_stability = 1.0;  // 1 - coupling
  double overall = 0.0;             // magnitude * coupling
  bool degenerate = false;          // all slopes vanish; magnitude pinned to 0
};

HessianInstability hessian_instability(const Eigen::MatrixXd& slope_matrix);
HessianInstability hessian_instability(const ReplicateEnsemble& ensemble);

// Draws `replicates` perturbed centers and fits one surrogate at each, with
// sample seeds derived from (cfg.seed, replicate index).
ReplicateEnsemble build_replicate_ensemble(const Model& model, const EvalPoint& center,
                                           const PerturbationConfig& cfg, int replicates);

struct InstabilityReport {
  double lipschitz_surrogate = 0.0;
  double lipschitz_fd_mean = 0.0;
  double lipschitz_fd_max = 0.0;
  double jaccard_avg = 1.0;
  double hessian_mag = 0.0;
  double hessian_mag_stability = 1.0;
  double hessian_cpl = 0.0;
  double hessian_cpl_stability = 1.0;
  double hessian_overall = 0.0;
  bool hessian_degenerate = false;
  EvalPoint center;

  nlohmann::json to_json() const;
};

}  // namespace uqlens
