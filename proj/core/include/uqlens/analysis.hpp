#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "uqlens/instability.hpp"
#include "uqlens/model.hpp"
#include "uqlens/surrogate.hpp"
#include "uqlens/uncertainty.hpp"

namespace uqlens {

// Effective knobs for one full per-point diagnosis. Sub-seeds for the surrogate
// fit, the conformal draw, and the replicate ensemble are derived from `seed`.
struct AnalysisConfig {
  double sigma_pert = 0.3;
  double kernel_sigma = 0.75;
  int surrogate_samples = 200;  // k, samples per surrogate fit
  int conformal_samples = 25;   // M, perturbations for conformal stats and fd Lipschitz
  int replicates = 25;          // M, refitted surrogates for Jaccard/Hessian
  int topk = 2;
  std::uint64_t seed = 0;

  void validate(int dimension) const;

  PerturbationConfig surrogate_config() const;
  PerturbationConfig conformal_config() const;
  PerturbationConfig replicate_config() const;
};

// Everything the toolkit can say about the model at one point.
struct PointAnalysis {
  EvalPoint point;
  LocalSurrogate surrogate;
  UncertaintyReport uncertainty;
  InstabilityReport instability;
  AnalysisConfig config;

  nlohmann::json to_json() const;
};

PointAnalysis analyze_point(const Model& model, const EvalPoint& x, const AnalysisConfig& cfg);

}  // namespace uqlens
