#include "uqlens/model.hpp"

#include <cmath>
#include <random>
#include <utility>

#include "uqlens/errors.hpp"
#include "uqlens/external_model.hpp"
#include "uqlens/sampling.hpp"

namespace uqlens {

namespace {

using nlohmann::json;

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Uniform on [-2, -0.1] u [0.1, 2]: bounded, never degenerately flat.
double sample_param(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> magnitude(0.1, 2.0);
  std::uniform_int_distribution<int> sign(0, 1);
  const double m = magnitude(rng);
  return sign(rng) == 0 ? m : -m;
}

std::vector<double> sample_params(std::mt19937_64& rng, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (double& v : out) v = sample_param(rng);
  return out;
}

void require_finite(const std::vector<double>& values, const std::string& field) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigError("model params." + field + ": non-finite value");
  }
}

void require_length(const std::vector<double>& values, int n, const std::string& field) {
  if (static_cast<int>(values.size()) != n) {
    throw ConfigError("model params." + field + ": expected " + std::to_string(n) +
                      " values, got " + std::to_string(values.size()));
  }
}

std::vector<double> number_array(const json& doc, const std::string& field) {
  if (!doc.contains(field)) throw ConfigError("model params." + field + ": missing");
  const json& arr = doc.at(field);
  if (!arr.is_array()) throw ConfigError("model params." + field + ": expected an array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const json& v : arr) {
    if (!v.is_number()) throw ConfigError("model params." + field + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

void validate_point(const EvalPoint& x) {
  if (x.coords.empty()) throw DimensionError("evaluation point must have dimension >= 1");
  for (double v : x.coords) {
    if (!std::isfinite(v)) throw EvalError("evaluation point has a non-finite coordinate");
  }
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::wavelike: return "wavelike";
    case ModelKind::radial: return "radial";
    case ModelKind::sigmoid_network: return "sigmoid_network";
    case ModelKind::piecewise_linear: return "piecewise_linear";
    case ModelKind::linear: return "linear";
    case ModelKind::external: return "external";
  }
  throw ConfigError("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "wavelike") return ModelKind::wavelike;
  if (name == "radial") return ModelKind::radial;
  if (name == "sigmoid_network" || name == "sigmoid") return ModelKind::sigmoid_network;
  if (name == "piecewise_linear" || name == "piecewise") return ModelKind::piecewise_linear;
  if (name == "linear") return ModelKind::linear;
  if (name == "external") return ModelKind::external;
  throw ConfigError("model.kind: unknown kind '" + name + "'");
}

ModelSpec ModelSpec::builtin(ModelKind kind, int dimension, std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = kind;
  spec.dimension = dimension;
  spec.seed = seed;
  return spec.resolved();
}

ModelSpec ModelSpec::resolved() const {
  ModelSpec spec = *this;
  if (!std::holds_alternative<std::monostate>(spec.params)) {
    spec.validate();
    return spec;
  }

  std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(spec.kind)));
  switch (spec.kind) {
    case ModelKind::wavelike: {
      WavelikeParams p;
      if (spec.seed != 0) {
        for (double& w : p.weights) w = sample_param(rng);
      }
      spec.params = p;
      break;
    }
    case ModelKind::radial:
      break;  // parameter-free
    case ModelKind::sigmoid_network: {
      SigmoidNetworkParams p;
      p.scale = sample_params(rng, spec.dimension);
      p.sharpness = sample_params(rng, spec.dimension);
      p.offset = sample_params(rng, spec.dimension);
      p.weights = sample_params(rng, spec.dimension);
      spec.params = std::move(p);
      break;
    }
    case ModelKind::piecewise_linear: {
      PiecewiseLinearParams p;
      p.negative_slopes = sample_params(rng, spec.dimension);
      p.positive_slopes = sample_params(rng, spec.dimension);
      p.weights = sample_params(rng, spec.dimension);
      spec.params = std::move(p);
      break;
    }
    case ModelKind::linear: {
      LinearParams p;
      p.coefficients = sample_params(rng, spec.dimension);
      p.intercept = sample_param(rng);
      spec.params = std::move(p);
      break;
    }
    case ModelKind::external:
      throw ConfigError("external model spec requires explicit params (command, timeout_ms)");
  }
  spec.validate();
  return spec;
}

void ModelSpec::validate() const {
  if (dimension < 1) throw DimensionError("model.dimension must be >= 1");
  switch (kind) {
    case ModelKind::wavelike: {
      if (dimension < 4) {
        throw DimensionError("wavelike model requires dimension >= 4, got " +
                             std::to_string(dimension));
      }
      if (const auto* p = std::get_if<WavelikeParams>(&params)) {
        for (double w : p->weights) {
          if (!std::isfinite(w)) throw ConfigError("model params.weights: non-finite value");
        }
      } else if (!std::holds_alternative<std::monostate>(params)) {
        throw ConfigError("model.params: wrong parameter block for kind wavelike");
      }
      break;
    }
    case ModelKind::radial:
      if (!std::holds_alternative<std::monostate>(params)) {
        throw ConfigError("model.params: radial model takes no parameters");
      }
      break;
    case ModelKind::sigmoid_network: {
      if (const auto* p = std::get_if<SigmoidNetworkParams>(&params)) {
        require_length(p->scale, dimension, "scale");
        require_length(p->sharpness, dimension, "sharpness");
        require_length(p->offset, dimension, "offset");
        require_length(p->weights, dimension, "weights");
        require_finite(p->scale, "scale");
        require_finite(p->sharpness, "sharpness");
        require_finite(p->offset, "offset");
        require_finite(p->weights, "weights");
      } else if (!std::holds_alternative<std::monostate>(params)) {
        throw ConfigError("model.params: wrong parameter block for kind sigmoid_network");
      }
      break;
    }
    case ModelKind::piecewise_linear: {
      if (const auto* p = std::get_if<PiecewiseLinearParams>(&params)) {
        require_length(p->negative_slopes, dimension, "negative_slopes");
        require_length(p->positive_slopes, dimension, "positive_slopes");
        require_length(p->weights, dimension, "weights");
        require_finite(p->negative_slopes, "negative_slopes");
        require_finite(p->positive_slopes, "positive_slopes");
        require_finite(p->weights, "weights");
      } else if (!std::holds_alternative<std::monostate>(params)) {
        throw ConfigError("model.params: wrong parameter block for kind piecewise_linear");
      }
      break;
    }
    case ModelKind::linear: {
      if (const auto* p = std::get_if<LinearParams>(&params)) {
        require_length(p->coefficients, dimension, "coefficients");
        require_finite(p->coefficients, "coefficients");
        if (!std::isfinite(p->intercept)) throw ConfigError("model params.intercept: non-finite");
      } else if (!std::holds_alternative<std::monostate>(params)) {
        throw ConfigError("model.params: wrong parameter block for kind linear");
      }
      break;
    }
    case ModelKind::external: {
      const auto* p = std::get_if<ExternalModelConfig>(&params);
      if (p == nullptr) {
        throw ConfigError("external model spec requires explicit params (command, timeout_ms)");
      }
      if (p->command.empty()) throw ConfigError("model params.command: must not be empty");
      if (p->timeout_ms <= 0) throw ConfigError("model params.timeout_ms: must be > 0");
      break;
    }
  }
}

nlohmann::json ModelSpec::to_json() const {
  const ModelSpec spec = resolved();
  json doc;
  doc["kind"] = to_string(spec.kind);
  doc["dimension"] = spec.dimension;
  doc["seed"] = spec.seed;

  json params_doc = json::object();
  if (const auto* p = std::get_if<WavelikeParams>(&spec.params)) {
    params_doc["weights"] = p->weights;
  } else if (const auto* p = std::get_if<SigmoidNetworkParams>(&spec.params)) {
    params_doc["scale"] = p->scale;
    params_doc["sharpness"] = p->sharpness;
    params_doc["offset"] = p->offset;
    params_doc["weights"] = p->weights;
  } else if (const auto* p = std::get_if<PiecewiseLinearParams>(&spec.params)) {
    params_doc["negative_slopes"] = p->negative_slopes;
    params_doc["positive_slopes"] = p->positive_slopes;
    params_doc["weights"] = p->weights;
  } else if (const auto* p = std::get_if<LinearParams>(&spec.params)) {
    params_doc["coefficients"] = p->coefficients;
    params_doc["intercept"] = p->intercept;
  } else if (const auto* p = std::get_if<ExternalModelConfig>(&spec.params)) {
    params_doc["command"] = p->command;
    params_doc["timeout_ms"] = p->timeout_ms;
    params_doc["protocol"] = "line_csv";
  }
  doc["params"] = std::move(params_doc);
  return doc;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("model: expected a JSON object");
  if (!doc.contains("kind") || !doc.at("kind").is_string()) {
    throw ConfigError("model.kind: missing or not a string");
  }
  ModelSpec spec;
  spec.kind = model_kind_from_string(doc.at("kind").get<std::string>());

  if (!doc.contains("dimension") || !doc.at("dimension").is_number_integer()) {
    throw ConfigError("model.dimension: missing or not an integer");
  }
  spec.dimension = doc.at("dimension").get<int>();

  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned() && !doc.at("seed").is_number_integer()) {
      throw ConfigError("model.seed: expected an unsigned integer");
    }
    spec.seed = doc.at("seed").get<std::uint64_t>();
  }

  if (doc.contains("params") && !doc.at("params").empty()) {
    const json& p = doc.at("params");
    if (!p.is_object()) throw ConfigError("model.params: expected a JSON object");
    switch (spec.kind) {
      case ModelKind::wavelike: {
        WavelikeParams wp;
        std::vector<double> w = number_array(p, "weights");
        if (w.size() != 4) throw ConfigError("model params.weights: expected exactly 4 values");
        std::copy(w.begin(), w.end(), wp.weights.begin());
        spec.params = wp;
        break;
      }
      case ModelKind::radial:
        throw ConfigError("model.params: radial model takes no parameters");
      case ModelKind::sigmoid_network: {
        SigmoidNetworkParams sp;
        sp.scale = number_array(p, "scale");
        sp.sharpness = number_array(p, "sharpness");
        sp.offset = number_array(p, "offset");
        sp.weights = number_array(p, "weights");
        spec.params = std::move(sp);
        break;
      }
      case ModelKind::piecewise_linear: {
        PiecewiseLinearParams pp;
        pp.negative_slopes = number_array(p, "negative_slopes");
        pp.positive_slopes = number_array(p, "positive_slopes");
        pp.weights = number_array(p, "weights");
        spec.params = std::move(pp);
        break;
      }
      case ModelKind::linear: {
        LinearParams lp;
        lp.coefficients = number_array(p, "coefficients");
        if (!p.contains("intercept") || !p.at("intercept").is_number()) {
          throw ConfigError("model params.intercept: missing or not a number");
        }
        lp.intercept = p.at("intercept").get<double>();
        spec.params = std::move(lp);
        break;
      }
      case ModelKind::external: {
        ExternalModelConfig ec;
        if (!p.contains("command") || !p.at("command").is_array() || p.at("command").empty()) {
          throw ConfigError("model params.command: expected a non-empty array of strings");
        }
        for (const json& c : p.at("command")) {
          if (!c.is_string()) throw ConfigError("model params.command: expected strings");
          ec.command.push_back(c.get<std::string>());
        }
        if (p.contains("timeout_ms")) {
          if (!p.at("timeout_ms").is_number_integer()) {
            throw ConfigError("model params.timeout_ms: expected an integer");
          }
          ec.timeout_ms = p.at("timeout_ms").get<int>();
        }
        if (p.contains("protocol") && p.at("protocol").get<std::string>() != "line_csv") {
          throw ConfigError("model params.protocol: only 'line_csv' is supported");
        }
        spec.params = std::move(ec);
        break;
      }
    }
  }
  const ModelSpec out = spec.resolved();
  out.validate();
  return out;
}

double eval_wavelike(const EvalPoint& x, const WavelikeParams& params) {
  validate_point(x);
  if (x.dimension() < 4) {
    throw DimensionError("wavelike model requires dimension >= 4, got " +
                         std::to_string(x.dimension()));
  }
  const double x1 = x.coords[0], x2 = x.coords[1], x3 = x.coords[2], x4 = x.coords[3];
  return params.weights[0] * std::tanh(5.0 * x1) +
         params.weights[1] * std::exp(-x2 * x2) * std::sin(10.0 * x2) +
         params.weights[2] * std::sin(3.0 * x3) * std::cos(2.0 * x3) +
         params.weights[3] * x4 * std::exp(-0.5 * x4 * x4);
}

double eval_radial(const EvalPoint& x) {
  validate_point(x);
  double norm_sq = 0.0;
  for (double v : x.coords) norm_sq += v * v;
  const double norm = std::sqrt(norm_sq);
  return std::sin(5.0 * norm) / (1.0 + 0.5 * norm_sq);
}

double eval_sigmoid_network(const EvalPoint& x, const SigmoidNetworkParams& params) {
  validate_point(x);
  const std::size_t n = x.coords.size();
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    sum += params.weights[j] * (params.scale[j] * sigmoid(params.sharpness[j] * x.coords[j]) +
                                params.offset[j]);
  }
  return sum;
}

double eval_piecewise_linear(const EvalPoint& x, const PiecewiseLinearParams& params) {
  validate_point(x);
  const std::size_t n = x.coords.size();
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double xj = x.coords[j];
    const double zj = xj < 0.0 ? params.negative_slopes[j] * xj : params.positive_slopes[j] * xj;
    sum += params.weights[j] * zj;
  }
  return sum;
}

double eval_linear(const EvalPoint& x, const LinearParams& params) {
  validate_point(x);
  double sum = params.intercept;
  for (std::size_t j = 0; j < x.coords.size(); ++j) {
    sum += params.coefficients[j] * x.coords[j];
  }
  return sum;
}

std::vector<double> Model::evaluate_batch(std::span<const EvalPoint> points) const {
  std::vector<double> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    try {
      out.push_back(evaluate(points[i]));
    } catch (const EvalError& e) {
      throw EvalError(std::string(e.what()) + " (row " + std::to_string(i) + ")", i);
    }
  }
  return out;
}

std::vector<double> eval_batch(const Model& model, std::span<const EvalPoint> points) {
  for (const EvalPoint& p : points) {
    if (p.dimension() != model.dimension()) {
      throw DimensionError("batch point dimension " + std::to_string(p.dimension()) +
                           " does not match model dimension " +
                           std::to_string(model.dimension()));
    }
  }
  return model.evaluate_batch(points);
}

namespace {

class BuiltinModel final : public Model {
 public:
  explicit BuiltinModel(ModelSpec spec) : spec_(std::move(spec)) {}

  int dimension() const override { return spec_.dimension; }

  double evaluate(const EvalPoint& x) const override {
    if (x.dimension() != spec_.dimension) {
      throw DimensionError("point dimension " + std::to_string(x.dimension()) +
                           " does not match model dimension " + std::to_string(spec_.dimension));
    }
    switch (spec_.kind) {
      case ModelKind::wavelike: return eval_wavelike(x, std::get<WavelikeParams>(spec_.params));
      case ModelKind::radial: return eval_radial(x);
      case ModelKind::sigmoid_network:
        return eval_sigmoid_network(x, std::get<SigmoidNetworkParams>(spec_.params));
      case ModelKind::piecewise_linear:
        return eval_piecewise_linear(x, std::get<PiecewiseLinearParams>(spec_.params));
      case ModelKind::linear: return eval_linear(x, std::get<LinearParams>(spec_.params));
      case ModelKind::external: break;
    }
    throw ConfigError("builtin model cannot evaluate an external spec");
  }

 private:
  ModelSpec spec_;
};

}  // namespace

std::unique_ptr<Model> make_model(const ModelSpec& spec) {
  const ModelSpec resolved = spec.resolved();
  if (resolved.kind == ModelKind::external) {
    return make_external_model(std::get<ExternalModelConfig>(resolved.params),
                               resolved.dimension);
  }
  return std::make_unique<BuiltinModel>(resolved);
}

}  // namespace uqlens
