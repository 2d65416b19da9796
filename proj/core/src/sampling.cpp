#include "uqlens/sampling.hpp"

#include <cmath>
#include <random>
#include <string>

#include "uqlens/errors.hpp"

namespace uqlens {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void validate(const PerturbationConfig& cfg, int surrogate_dimension) {
  if (!std::isfinite(cfg.sigma_pert) || cfg.sigma_pert <= 0.0) {
    throw ConfigError("perturbation sigma_pert must be finite and > 0");
  }
  if (!std::isfinite(cfg.kernel_sigma) || cfg.kernel_sigma <= 0.0) {
    throw ConfigError("perturbation kernel_sigma must be finite and > 0");
  }
  if (cfg.count < 2) {
    throw ConfigError("perturbation count must be >= 2");
  }
  if (surrogate_dimension >= 0 && cfg.count < surrogate_dimension + 2) {
    throw ConfigError("perturbation count " + std::to_string(cfg.count) +
                      " underdetermines a surrogate fit in dimension " +
                      std::to_string(surrogate_dimension) + " (need >= dimension + 2)");
  }
}

std::vector<EvalPoint> sample_perturbations(const EvalPoint& center, const PerturbationConfig& cfg) {
  validate_point(center);
  validate(cfg);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int n = center.dimension();
  std::vector<EvalPoint> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  for (int j = 0; j < cfg.count; ++j) {
    EvalPoint p = center;
    for (int d = 0; d < n; ++d) {
      p.coords[static_cast<std::size_t>(d)] += cfg.sigma_pert * normal(rng);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> kernel_weights(const EvalPoint& center, std::span<const EvalPoint> samples,
                                   double kernel_sigma) {
  if (!std::isfinite(kernel_sigma) || kernel_sigma <= 0.0) {
    throw ConfigError("kernel_sigma must be finite and > 0");
  }
  const double inv_sigma_sq = 1.0 / (kernel_sigma * kernel_sigma);
  std::vector<double> weights;
  weights.reserve(samples.size());
  for (const EvalPoint& z : samples) {
    double dist_sq = 0.0;
    for (std::size_t d = 0; d < center.coords.size(); ++d) {
      const double diff = z.coords[d] - center.coords[d];
      dist_sq += diff * diff;
    }
    weights.push_back(std::exp(-dist_sq * inv_sigma_sq));
  }
  return weights;
}

EvalPoint StandardizationStats::apply(const EvalPoint& x) const {
  EvalPoint out = x;
  for (std::size_t d = 0; d < out.coords.size(); ++d) {
    out.coords[d] = (out.coords[d] - means[d]) / deviations[d];
  }
  return out;
}

EvalPoint StandardizationStats::invert(const EvalPoint& x) const {
  EvalPoint out = x;
  for (std::size_t d = 0; d < out.coords.size(); ++d) {
    out.coords[d] = out.coords[d] * deviations[d] + means[d];
  }
  return out;
}

std::pair<std::vector<EvalPoint>, StandardizationStats> standardize(std::span<const EvalPoint> rows) {
  if (rows.size() < 2) {
    throw ConfigError("standardize needs at least 2 rows");
  }
  const std::size_t n = rows.front().coords.size();
  for (const EvalPoint& row : rows) {
    if (row.coords.size() != n) {
      throw DimensionError("standardize: ragged rows");
    }
  }

  StandardizationStats stats;
  stats.means.assign(n, 0.0);
  stats.deviations.assign(n, 0.0);

  const double count = static_cast<double>(rows.size());
  for (const EvalPoint& row : rows) {
    for (std::size_t d = 0; d < n; ++d) stats.means[d] += row.coords[d];
  }
  for (std::size_t d = 0; d < n; ++d) stats.means[d] /= count;

  for (const EvalPoint& row : rows) {
    for (std::size_t d = 0; d < n; ++d) {
      const double diff = row.coords[d] - stats.means[d];
      stats.deviations[d] += diff * diff;
    }
  }
  for (std::size_t d = 0; d < n; ++d) {
    const double variance = stats.deviations[d] / (count - 1.0);
    if (variance <= 0.0) {
      throw DegenerateError("standardize: column " + std::to_string(d) + " has zero variance");
    }
    stats.deviations[d] = std::sqrt(variance);
  }

  std::vector<EvalPoint> out;
  out.reserve(rows.size());
  for (const EvalPoint& row : rows) out.push_back(stats.apply(row));
  return {std::move(out), std::move(stats)};
}

}  // namespace uqlens
