#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "uqlens/model.hpp"

namespace uqlens {

// Deterministic stream splitting: splitmix64 finalizer over (base, stream).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct PerturbationConfig {
  double sigma_pert = 0.3;    // per-axis standard deviation of the Gaussian perturbation
  int count = 200;            // samples drawn around the center
  double kernel_sigma = 0.75; // sigma in the Gaussian weight exp(-d^2 / sigma^2)
  std::uint64_t seed = 0;
};

// surrogate_dimension >= 0 additionally enforces count >= dimension + 2 so the
// weighted least-squares system stays overdetermined.
void validate(const PerturbationConfig& cfg, int surrogate_dimension = -1);

// center + eps_j with eps_j ~ N(0, sigma_pert^2 I), deterministic given cfg.seed.
std::vector<EvalPoint> sample_perturbations(const EvalPoint& center, const PerturbationConfig& cfg);

// w_i = exp(-||z_i - center||^2 / kernel_sigma^2), in (0, 1].
std::vector<double> kernel_weights(const EvalPoint& center, std::span<const EvalPoint> samples,
                                   double kernel_sigma);

struct StandardizationStats {
  std::vector<double> means;
  std::vector<double> deviations;  // sample (n-1) convention, strictly positive

  EvalPoint apply(const EvalPoint& x) const;
  EvalPoint invert(const EvalPoint& x) const;
};

// Columnwise standardization to sample mean 0 and sample SD 1.
// Throws DegenerateError naming the column when a column has zero variance.
std::pair<std::vector<EvalPoint>, StandardizationStats> standardize(std::span<const EvalPoint> rows);

}  // namespace uqlens
