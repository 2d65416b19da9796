#include "uqlens/analysis.hpp"

#include <string>

#include "uqlens/errors.hpp"
#include "uqlens/sampling.hpp"

namespace uqlens {

namespace {

// Sub-seed stream tags; changing these renumbers every derived random draw.
constexpr std::uint64_t kSurrogateStream = 1;
constexpr std::uint64_t kConformalStream = 2;
constexpr std::uint64_t kReplicateStream = 3;

}  // namespace

void AnalysisConfig::validate(int dimension) const {
  if (dimension < 1) throw DimensionError("analysis dimension must be >= 1");
  if (!(sigma_pert > 0.0)) throw ConfigError("sigma_pert must be > 0");
  if (!(kernel_sigma > 0.0)) throw ConfigError("kernel_sigma must be > 0");
  if (surrogate_samples < dimension + 2) {
    throw ConfigError("surrogate samples must be >= dimension + 2 (got " +
                      std::to_string(surrogate_samples) + " for dimension " +
                      std::to_string(dimension) + ")");
  }
  if (conformal_samples < 2) throw ConfigError("conformal samples must be >= 2");
  if (replicates < 2) throw ConfigError("replicates must be >= 2");
  if (topk < 1) throw ConfigError("topk must be >= 1");
}

PerturbationConfig AnalysisConfig::surrogate_config() const {
  return {sigma_pert, surrogate_samples, kernel_sigma, derive_seed(seed, kSurrogateStream)};
}

PerturbationConfig AnalysisConfig::conformal_config() const {
  return {sigma_pert, conformal_samples, kernel_sigma, derive_seed(seed, kConformalStream)};
}

PerturbationConfig AnalysisConfig::replicate_config() const {
  return {sigma_pert, surrogate_samples, kernel_sigma, derive_seed(seed, kReplicateStream)};
}

PointAnalysis analyze_point(const Model& model, const EvalPoint& x, const AnalysisConfig& cfg) {
  validate_point(x);
  if (x.dimension() != model.dimension()) {
    throw DimensionError("query point dimension " + std::to_string(x.dimension()) +
                         " does not match model dimension " + std::to_string(model.dimension()));
  }
  cfg.validate(x.dimension());

  PointAnalysis out;
  out.point = x;
  out.config = cfg;

  out.surrogate = fit_local_surrogate(model, x, cfg.surrogate_config());

  // One conformal draw feeds both the dispersion stats and the
  // finite-difference Lipschitz estimates.
  const PerturbationConfig conformal_cfg = cfg.conformal_config();
  const std::vector<EvalPoint> conformal_samples = sample_perturbations(x, conformal_cfg);
  const std::vector<double> conformal_values = eval_batch(model, conformal_samples);

  out.uncertainty = conformal_stats_from_values(x, conformal_values);
  out.uncertainty.local_linear_rmse = local_linear_uncertainty(out.surrogate);
  out.uncertainty.surrogate_seed = out.surrogate.sample_seed;
  out.uncertainty.conformal_seed = conformal_cfg.seed;

  const ReplicateEnsemble ensemble =
      build_replicate_ensemble(model, x, cfg.replicate_config(), cfg.replicates);
  const HessianInstability hessian = hessian_instability(ensemble);

  out.instability.center = x;
  out.instability.lipschitz_surrogate = surrogate_gradient_norm(out.surrogate);
  out.instability.lipschitz_fd_mean = lipschitz_finite_difference(
      conformal_samples, conformal_values, FiniteDifferenceMode::mean());
  out.instability.lipschitz_fd_max = lipschitz_finite_difference(
      conformal_samples, conformal_values, FiniteDifferenceMode::max());
  out.instability.jaccard_avg = jaccard_topk(ensemble, cfg.topk);
  out.instability.hessian_mag = hessian.magnitude;
  out.instability.hessian_mag_stability = hessian.magnitude_stability;
  out.instability.hessian_cpl = hessian.coupling;
  out.instability.hessian_cpl_stability = hessian.coupling_stability;
  out.instability.hessian_overall = hessian.overall;
  out.instability.hessian_degenerate = hessian.degenerate;
  return out;
}

nlohmann::json PointAnalysis::to_json() const {
  nlohmann::json cfg_doc;
  cfg_doc["sigma_pert"] = config.sigma_pert;
  cfg_doc["kernel_sigma"] = config.kernel_sigma;
  cfg_doc["surrogate_samples"] = config.surrogate_samples;
  cfg_doc["conformal_samples"] = config.conformal_samples;
  cfg_doc["replicates"] = config.replicates;
  cfg_doc["topk"] = config.topk;
  cfg_doc["seed"] = config.seed;

  nlohmann::json doc;
  doc["point"] = point.coords;
  doc["surrogate"] = surrogate.to_json();
  doc["uncertainty"] = uncertainty.to_json();
  doc["instability"] = instability.to_json();
  doc["config"] = std::move(cfg_doc);
  return doc;
}

}  // namespace uqlens
