#include "uqlens/instability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uqlens/errors.hpp"
#include "uqlens/uncertainty.hpp"

namespace uqlens {

namespace {

constexpr double kPairDistanceFloor = 1e-12;
constexpr double kSlopeNormFloor = 1e-24;  // mean squared slope below this counts as degenerate

std::vector<int> topk_features(const Eigen::VectorXd& beta, int k) {
  std::vector<int> order(static_cast<std::size_t>(beta.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ma = std::abs(beta(a));
    const double mb = std::abs(beta(b));
    if (ma != mb) return ma > mb;
    return a < b;  // ties go to the lowest feature index
  });
  order.resize(static_cast<std::size_t>(std::min<int>(k, static_cast<int>(beta.size()))));
  std::sort(order.begin(), order.end());
  return order;
}

double jaccard(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  const std::size_t uni = a.size() + b.size() - inter.size();
  if (uni == 0) return 1.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni);
}

}  // namespace

double lipschitz_finite_difference(std::span<const EvalPoint> samples,
                                   std::span<const double> values, FiniteDifferenceMode mode) {
  if (samples.size() != values.size()) {
    throw ConfigError("finite-difference Lipschitz: samples and values differ in length");
  }
  if (samples.size() < 2) {
    throw ConfigError("finite-difference Lipschitz needs at least 2 samples");
  }

  std::vector<double> slopes;
  slopes.reserve(samples.size() * (samples.size() - 1) / 2);
  for (std::size_t j = 0; j + 1 < samples.size(); ++j) {
    for (std::size_t k = j + 1; k < samples.size(); ++k) {
      double dist_sq = 0.0;
      for (std::size_t d = 0; d < samples[j].coords.size(); ++d) {
        const double diff = samples[j].coords[d] - samples[k].coords[d];
        dist_sq += diff * diff;
      }
      const double dist = std::sqrt(dist_sq);
      if (dist < kPairDistanceFloor) continue;
      slopes.push_back(std::abs(values[j] - values[k]) / dist);
    }
  }
  if (slopes.empty()) {
    throw DegenerateError("finite-difference Lipschitz: all sample pairs coincide");
  }

  switch (mode.stat) {
    case FiniteDifferenceMode::Stat::mean:
      return std::accumulate(slopes.begin(), slopes.end(), 0.0) /
             static_cast<double>(slopes.size());
    case FiniteDifferenceMode::Stat::max:
      return *std::max_element(slopes.begin(), slopes.end());
    case FiniteDifferenceMode::Stat::quantile:
      return quantile(slopes, mode.quantile_p);
  }
  throw ConfigError("finite-difference Lipschitz: unknown statistic");
}

double lipschitz_finite_difference(const Model& model, std::span<const EvalPoint> samples,
                                   FiniteDifferenceMode mode) {
  const std::vector<double> values = eval_batch(model, samples);
  return lipschitz_finite_difference(samples, values, mode);
}

double jaccard_topk(const ReplicateEnsemble& ensemble, int k) {
  if (k < 1) throw ConfigError("top-k size must be >= 1");
  const std::size_t m = ensemble.surrogates.size();
  if (m < 2) return 1.0;

  std::vector<std::vector<int>> sets;
  sets.reserve(m);
  for (const LocalSurrogate& s : ensemble.surrogates) sets.push_back(topk_features(s.beta, k));

  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a + 1 < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      total += jaccard(sets[a], sets[b]);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

HessianInstability hessian_instability(const Eigen::MatrixXd& slope_matrix) {
  const Eigen::Index m = slope_matrix.rows();
  if (m < 2) throw ConfigError("slope covariance needs at least 2 replicates");

  HessianInstability out;
  const double mean_sq_norm = slope_matrix.squaredNorm() / static_cast<double>(m);
  if (mean_sq_norm < kSlopeNormFloor) {
    out.degenerate = true;
    return out;  // flat everywhere: pinned to the stable end of every scale
  }

  const Eigen::RowVectorXd mean = slope_matrix.colwise().mean();
  const Eigen::MatrixXd centered = slope_matrix.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(m - 1);

  out.magnitude = cov.trace() / mean_sq_norm;
  out.magnitude_stability = 1.0 / (1.0 + out.magnitude);

  const double fro = cov.norm();
  if (fro > 0.0) {
    const double diag_sq = cov.diagonal().squaredNorm();
    const double off_sq = std::max(cov.squaredNorm() - diag_sq, 0.0);
    out.coupling = std::sqrt(off_sq) / fro;
  }
  out.coupling_stability = 1.0 - out.coupling;
  out.overall = out.magnitude * out.coupling;
  return out;
}

HessianInstability hessian_instability(const ReplicateEnsemble& ensemble) {
  return hessian_instability(ensemble.slope_matrix);
}

ReplicateEnsemble build_replicate_ensemble(const Model& model, const EvalPoint& center,
                                           const PerturbationConfig& cfg, int replicates) {
  validate_point(center);
  if (replicates < 2) throw ConfigError("replicate ensemble needs at least 2 replicates");
  validate(cfg, center.dimension());

  PerturbationConfig center_cfg = cfg;
  center_cfg.count = replicates;
  center_cfg.seed = derive_seed(cfg.seed, 0);

  ReplicateEnsemble ensemble;
  ensemble.center = center;
  ensemble.replicate_centers = sample_perturbations(center, center_cfg);
  ensemble.surrogates.reserve(static_cast<std::size_t>(replicates));
  ensemble.slope_matrix.resize(replicates, center.dimension());

  for (int r = 0; r < replicates; ++r) {
    PerturbationConfig fit_cfg = cfg;
    fit_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r) + 1);
    const EvalPoint& rc = ensemble.replicate_centers[static_cast<std::size_t>(r)];
    LocalSurrogate fit = fit_local_surrogate(model, rc, fit_cfg);
    ensemble.slope_matrix.row(r) = fit.beta.transpose();
    ensemble.surrogates.push_back(std::move(fit));
  }
  return ensemble;
}

nlohmann::json InstabilityReport::to_json() const {
  nlohmann::json doc;
  doc["lipschitz_surrogate"] = lipschitz_surrogate;
  doc["lipschitz_fd_mean"] = lipschitz_fd_mean;
  doc["lipschitz_fd_max"] = lipschitz_fd_max;
  doc["jaccard_avg"] = jaccard_avg;
  doc["hessian_mag"] = hessian_mag;
  doc["hessian_mag_stability"] = hessian_mag_stability;
  doc["hessian_cpl"] = hessian_cpl;
  doc["hessian_cpl_stability"] = hessian_cpl_stability;
  doc["hessian_overall"] = hessian_overall;
  doc["hessian_degenerate"] = hessian_degenerate;
  doc["center"] = center.coords;
  return doc;
}

}  // namespace uqlens
