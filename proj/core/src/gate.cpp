#include "uqlens/gate.hpp"

#include <cmath>

#include "uqlens/errors.hpp"
#include "uqlens/surrogate.hpp"

namespace uqlens {

namespace {

using nlohmann::json;

double metric_value(const Model& model, const EvalPoint& x, const AnalysisConfig& cfg,
                    GateMetric metric) {
  switch (metric) {
    case GateMetric::local_linear_rmse:
      return local_linear_uncertainty(fit_local_surrogate(model, x, cfg.surrogate_config()));
    case GateMetric::conformal_sd:
      return conformal_stats(model, x, cfg.conformal_config()).conformal_sd;
  }
  throw ConfigError("unknown gate metric");
}

}  // namespace

std::string to_string(GateMetric metric) {
  switch (metric) {
    case GateMetric::local_linear_rmse: return "local_linear_rmse";
    case GateMetric::conformal_sd: return "conformal_sd";
  }
  throw ConfigError("unknown gate metric");
}

GateMetric gate_metric_from_string(const std::string& name) {
  if (name == "local_linear_rmse") return GateMetric::local_linear_rmse;
  if (name == "conformal_sd") return GateMetric::conformal_sd;
  throw ConfigError("policy.metric: unknown metric '" + name +
                    "' (expected local_linear_rmse or conformal_sd)");
}

void GatePolicy::validate() const {
  if (!std::isfinite(default_threshold) || default_threshold < 0.0) {
    throw ConfigError("policy.default_threshold: must be finite and >= 0");
  }
  for (std::size_t i = 0; i < bands.size(); ++i) {
    const Band& band = bands[i];
    if (!std::isfinite(band.lo) || !std::isfinite(band.hi)) {
      throw ConfigError("policy.bands[" + std::to_string(i) + "]: non-finite edge");
    }
    if (!(band.lo < band.hi)) {
      throw ConfigError("policy.bands[" + std::to_string(i) + "]: lo must be < hi");
    }
    if (!std::isfinite(band.threshold) || band.threshold < 0.0) {
      throw ConfigError("policy.bands[" + std::to_string(i) +
                        "].threshold: must be finite and >= 0");
    }
    if (i > 0 && bands[i - 1].hi > band.lo) {
      throw ConfigError("policy.bands: bands must be ordered by lo and non-overlapping");
    }
  }
}

double GatePolicy::threshold_for(double forecast) const {
  for (const Band& band : bands) {
    if (forecast >= band.lo && forecast < band.hi) return band.threshold;
  }
  return default_threshold;
}

nlohmann::json GatePolicy::to_json() const {
  json doc;
  doc["metric"] = to_string(metric);
  doc["default_threshold"] = default_threshold;
  json band_docs = json::array();
  for (const Band& band : bands) {
    band_docs.push_back({{"lo", band.lo}, {"hi", band.hi}, {"threshold", band.threshold}});
  }
  doc["bands"] = std::move(band_docs);
  return doc;
}

GatePolicy GatePolicy::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("policy: expected a JSON object");
  GatePolicy policy;
  if (!doc.contains("metric") || !doc.at("metric").is_string()) {
    throw ConfigError("policy.metric: missing or not a string");
  }
  policy.metric = gate_metric_from_string(doc.at("metric").get<std::string>());
  if (!doc.contains("default_threshold") || !doc.at("default_threshold").is_number()) {
    throw ConfigError("policy.default_threshold: missing or not a number");
  }
  policy.default_threshold = doc.at("default_threshold").get<double>();
  if (doc.contains("bands")) {
    if (!doc.at("bands").is_array()) throw ConfigError("policy.bands: expected an array");
    for (const json& band_doc : doc.at("bands")) {
      if (!band_doc.is_object() || !band_doc.contains("lo") || !band_doc.contains("hi") ||
          !band_doc.contains("threshold") || !band_doc.at("lo").is_number() ||
          !band_doc.at("hi").is_number() || !band_doc.at("threshold").is_number()) {
        throw ConfigError("policy.bands: each band needs numeric lo, hi, threshold");
      }
      policy.bands.push_back({band_doc.at("lo").get<double>(), band_doc.at("hi").get<double>(),
                              band_doc.at("threshold").get<double>()});
    }
  }
  policy.validate();
  return policy;
}

double FallbackModel::predict(const EvalPoint& x) const {
  validate_point(x);
  if (x.dimension() != static_cast<int>(coefficients.size())) {
    throw DimensionError("fallback input dimension " + std::to_string(x.dimension()) +
                         " does not match fitted dimension " +
                         std::to_string(coefficients.size()));
  }
  const EvalPoint z = training_stats.apply(x);
  double sum = intercept;
  for (Eigen::Index j = 0; j < coefficients.size(); ++j) {
    sum += coefficients(j) * z.coords[static_cast<std::size_t>(j)];
  }
  return sum;
}

nlohmann::json FallbackModel::to_json() const {
  json doc;
  doc["coefficients"] =
      std::vector<double>(coefficients.data(), coefficients.data() + coefficients.size());
  doc["intercept"] = intercept;
  doc["standardization"] = {{"means", training_stats.means},
                            {"deviations", training_stats.deviations}};
  return doc;
}

FallbackModel FallbackModel::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("fallback: expected a JSON object");
  auto numbers = [&doc](const json& parent, const std::string& field,
                        const std::string& label) -> std::vector<double> {
    (void)doc;
    if (!parent.contains(field) || !parent.at(field).is_array()) {
      throw ConfigError(label + ": missing or not an array");
    }
    std::vector<double> out;
    for (const json& v : parent.at(field)) {
      if (!v.is_number()) throw ConfigError(label + ": expected numbers");
      out.push_back(v.get<double>());
    }
    return out;
  };

  FallbackModel fb;
  const std::vector<double> coeffs = numbers(doc, "coefficients", "fallback.coefficients");
  if (coeffs.empty()) throw ConfigError("fallback.coefficients: must not be empty");
  fb.coefficients = Eigen::Map<const Eigen::VectorXd>(coeffs.data(),
                                                      static_cast<Eigen::Index>(coeffs.size()));
  if (!doc.contains("intercept") || !doc.at("intercept").is_number()) {
    throw ConfigError("fallback.intercept: missing or not a number");
  }
  fb.intercept = doc.at("intercept").get<double>();

  if (!doc.contains("standardization") || !doc.at("standardization").is_object()) {
    throw ConfigError("fallback.standardization: missing or not an object");
  }
  const json& st = doc.at("standardization");
  fb.training_stats.means = numbers(st, "means", "fallback.standardization.means");
  fb.training_stats.deviations = numbers(st, "deviations", "fallback.standardization.deviations");
  if (fb.training_stats.means.size() != coeffs.size() ||
      fb.training_stats.deviations.size() != coeffs.size()) {
    throw ConfigError("fallback.standardization: length does not match coefficients");
  }
  for (double d : fb.training_stats.deviations) {
    if (!(d > 0.0)) throw ConfigError("fallback.standardization.deviations: must be > 0");
  }
  return fb;
}

FallbackModel fit_fallback(std::span<const EvalPoint> features, std::span<const double> targets) {
  if (features.size() != targets.size()) {
    throw ConfigError("fallback fit: features and targets differ in length");
  }
  if (features.empty()) throw ConfigError("fallback fit: empty training set");
  const int dim = features.front().dimension();
  if (static_cast<int>(features.size()) < dim + 2) {
    throw ConfigError("fallback fit needs at least dimension + 2 rows, got " +
                      std::to_string(features.size()));
  }

  auto [standardized, stats] = standardize(features);

  const int m = static_cast<int>(standardized.size());
  Eigen::MatrixXd design(m, dim + 1);
  Eigen::VectorXd response(m);
  for (int i = 0; i < m; ++i) {
    design(i, 0) = 1.0;
    for (int j = 0; j < dim; ++j) {
      design(i, j + 1) = standardized[static_cast<std::size_t>(i)].coords[static_cast<std::size_t>(j)];
    }
    response(i) = targets[static_cast<std::size_t>(i)];
  }

  const Eigen::VectorXd theta = design.colPivHouseholderQr().solve(response);

  FallbackModel fb;
  fb.intercept = theta(0);
  fb.coefficients = theta.tail(dim);
  fb.training_stats = std::move(stats);
  return fb;
}

std::string to_string(ForecastSource source) {
  return source == ForecastSource::primary ? "primary" : "fallback";
}

nlohmann::json GateDecision::to_json() const {
  json doc;
  doc["forecast"] = forecast;
  doc["source"] = to_string(source);
  doc["uncertainty"] = uncertainty;
  doc["threshold_applied"] = threshold_applied;
  doc["primary_forecast"] = primary_forecast;
  doc["fallback_forecast"] = fallback_forecast;
  doc["diagnostics"] = diagnostics.to_json();
  return doc;
}

GateDecision decide(const Model& model, const FallbackModel& fallback, const GatePolicy& policy,
                    const EvalPoint& x, const AnalysisConfig& cfg) {
  validate_point(x);
  if (x.dimension() != model.dimension()) {
    throw DimensionError("query point dimension " + std::to_string(x.dimension()) +
                         " does not match model dimension " + std::to_string(model.dimension()));
  }
  cfg.validate(x.dimension());
  policy.validate();

  GateDecision decision;
  decision.primary_forecast = model.evaluate(x);

  const LocalSurrogate surrogate = fit_local_surrogate(model, x, cfg.surrogate_config());
  decision.diagnostics = conformal_stats(model, x, cfg.conformal_config());
  decision.diagnostics.local_linear_rmse = local_linear_uncertainty(surrogate);
  decision.diagnostics.surrogate_seed = surrogate.sample_seed;

  decision.uncertainty = policy.metric == GateMetric::local_linear_rmse
                             ? decision.diagnostics.local_linear_rmse
                             : decision.diagnostics.conformal_sd;
  decision.threshold_applied = policy.threshold_for(decision.primary_forecast);

  decision.fallback_forecast = fallback.predict(x);
  if (decision.uncertainty > decision.threshold_applied) {
    decision.source = ForecastSource::fallback;
    decision.forecast = decision.fallback_forecast;
  } else {
    decision.source = ForecastSource::primary;
    decision.forecast = decision.primary_forecast;
  }
  return decision;
}

nlohmann::json RegionMap::to_json() const {
  json doc;
  json probe_docs = json::array();
  for (const RegionProbe& probe : probes) {
    probe_docs.push_back({{"point", probe.point.coords},
                          {"forecast", probe.forecast},
                          {"metric", probe.metric},
                          {"threshold", probe.threshold},
                          {"exceeded", probe.exceeded}});
  }
  doc["probes"] = std::move(probe_docs);
  json failure_docs = json::array();
  for (const auto& [index, message] : failures) {
    failure_docs.push_back({{"probe", index}, {"error", message}});
  }
  doc["failures"] = std::move(failure_docs);
  doc["exceed_count"] = exceed_count;
  doc["exceed_fraction"] = exceed_fraction;
  return doc;
}

RegionMap map_unforecastable_region(const Model& model, const GatePolicy& policy,
                                    std::span<const EvalPoint> probes, const AnalysisConfig& cfg) {
  policy.validate();
  cfg.validate(model.dimension());

  RegionMap map;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    try {
      validate_point(probes[i]);
      if (probes[i].dimension() != model.dimension()) {
        throw DimensionError("probe dimension " + std::to_string(probes[i].dimension()) +
                             " does not match model dimension " +
                             std::to_string(model.dimension()));
      }
      RegionProbe probe;
      probe.point = probes[i];
      probe.forecast = model.evaluate(probes[i]);
      probe.metric = metric_value(model, probes[i], cfg, policy.metric);
      probe.threshold = policy.threshold_for(probe.forecast);
      probe.exceeded = probe.metric > probe.threshold;
      if (probe.exceeded) ++map.exceed_count;
      map.probes.push_back(std::move(probe));
    } catch (const Error& e) {
      map.failures.emplace_back(i, e.what());
    }
  }
  if (!map.probes.empty()) {
    map.exceed_fraction =
        static_cast<double>(map.exceed_count) / static_cast<double>(map.probes.size());
  }
  return map;
}

}  // namespace uqlens
