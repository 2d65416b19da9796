#include "uqlens/surrogate.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "uqlens/errors.hpp"

namespace uqlens {

namespace {

constexpr double kConditionLimit = 1e12;
constexpr double kRidgeScale = 1e-8;

}  // namespace

nlohmann::json LocalSurrogate::to_json() const {
  nlohmann::json doc;
  doc["beta"] = std::vector<double>(beta.data(), beta.data() + beta.size());
  doc["intercept"] = intercept;
  doc["center"] = center.coords;
  doc["sample_seed"] = sample_seed;
  doc["ridged"] = ridged;
  doc["dof_fallback"] = dof_fallback;
  std::vector<std::vector<double>> cov(static_cast<std::size_t>(coef_covariance.rows()));
  for (Eigen::Index i = 0; i < coef_covariance.rows(); ++i) {
    cov[static_cast<std::size_t>(i)].assign(coef_covariance.row(i).begin(),
                                            coef_covariance.row(i).end());
  }
  doc["coef_covariance"] = std::move(cov);
  return doc;
}

LocalSurrogate fit_local_surrogate(const Model& model, const EvalPoint& center,
                                   const PerturbationConfig& cfg) {
  validate_point(center);
  const int dim = center.dimension();
  if (dim != model.dimension()) {
    throw DimensionError("query point dimension " + std::to_string(dim) +
                         " does not match model dimension " + std::to_string(model.dimension()));
  }
  validate(cfg, dim);

  const std::vector<EvalPoint> samples = sample_perturbations(center, cfg);
  const std::vector<double> values = eval_batch(model, samples);
  const std::vector<double> weights = kernel_weights(center, samples, cfg.kernel_sigma);
  double total_weight = 0.0;
  for (const double w : weights) total_weight += w;
  if (!(total_weight > 0.0)) throw DegenerateError("surrogate weights sum to zero");

  const int m = static_cast<int>(samples.size());
  const int cols = dim + 1;  // intercept + slopes

  // Center the design on the query point: identical slopes, better conditioning.
  Eigen::MatrixXd design(m, cols);
  Eigen::VectorXd response(m);
  Eigen::VectorXd w(m);
  for (int i = 0; i < m; ++i) {
    design(i, 0) = 1.0;
    for (int j = 0; j < dim; ++j) {
      design(i, j + 1) = samples[static_cast<std::size_t>(i)].coords[static_cast<std::size_t>(j)] -
                         center.coords[static_cast<std::size_t>(j)];
    }
    response(i) = values[static_cast<std::size_t>(i)];
    w(i) = weights[static_cast<std::size_t>(i)];
  }

  const Eigen::MatrixXd weighted = w.asDiagonal() * design;
  Eigen::MatrixXd normal = design.transpose() * weighted;
  const Eigen::VectorXd rhs = design.transpose() * (w.asDiagonal() * response);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(normal);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  bool ridged = false;
  if (!(smin > 0.0) || smax / smin > kConditionLimit) {
    const double lambda = kRidgeScale * normal.trace() / static_cast<double>(cols);
    normal.diagonal().array() += lambda;
    ridged = true;
  }

  const Eigen::LDLT<Eigen::MatrixXd> solver(normal);
  const Eigen::VectorXd theta = solver.solve(rhs);

  LocalSurrogate fit;
  fit.beta = theta.tail(dim);
  fit.center = center;
  fit.sample_seed = cfg.seed;
  fit.ridged = ridged;
  fit.weights = weights;

  // Fold the centering back into the reported intercept.
  double shift = 0.0;
  for (int j = 0; j < dim; ++j) shift += fit.beta(j) * center.coords[static_cast<std::size_t>(j)];
  fit.intercept = theta(0) - shift;

  fit.residuals.resize(static_cast<std::size_t>(m));
  double wrss = 0.0;
  double sum_w = 0.0;
  double sum_w2 = 0.0;
  for (int i = 0; i < m; ++i) {
    const double predicted = theta(0) + design.row(i).tail(dim).dot(fit.beta);
    const double r = response(i) - predicted;
    fit.residuals[static_cast<std::size_t>(i)] = r;
    wrss += w(i) * r * r;
    sum_w += w(i);
    sum_w2 += w(i) * w(i);
  }

  double eff_dof = sum_w - static_cast<double>(cols) * sum_w2 / sum_w;
  if (!(eff_dof > 0.0)) {
    eff_dof = sum_w;
    fit.dof_fallback = true;
  }
  const double sigma_sq = wrss / eff_dof;

  const Eigen::MatrixXd inverse = solver.solve(Eigen::MatrixXd::Identity(cols, cols));
  fit.coef_covariance = sigma_sq * inverse.bottomRightCorner(dim, dim);
  return fit;
}

double surrogate_gradient_norm(const LocalSurrogate& s) { return s.beta.norm(); }

}  // namespace uqlens
