#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "uqlens/model.hpp"
#include "uqlens/sampling.hpp"

namespace uqlens {

// Local linear model fitted by weighted least squares around a query point.
// The fit always includes an intercept; beta holds only the slopes.
struct LocalSurrogate {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  std::vector<double> weights;      // kernel weight per sample
  std::vector<double> residuals;    // model value minus surrogate value per sample
  Eigen::MatrixXd coef_covariance;  // covariance of the slope estimates
  EvalPoint center;
  std::uint64_t sample_seed = 0;
  bool ridged = false;        // normal matrix was near-singular and got a ridge term
  bool dof_fallback = false;  // variance denominator fell back to the plain weight sum

  nlohmann::json to_json() const;
};

// Draws cfg.count perturbations, evaluates the model, and solves the weighted
// least-squares problem exactly. Requires cfg.count >= dimension + 2.
LocalSurrogate fit_local_surrogate(const Model& model, const EvalPoint& center,
                                   const PerturbationConfig& cfg);

// Euclidean norm of the slopes, the surrogate estimate of the local gradient norm.
double surrogate_gradient_norm(const LocalSurrogate& s);

}  // namespace uqlens
