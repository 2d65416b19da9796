#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace uqlens {

// A point in standardized feature space.
struct EvalPoint {
  std::vector<double> coords;

  EvalPoint() = default;
  explicit EvalPoint(std::vector<double> c) : coords(std::move(c)) {}

  int dimension() const { return static_cast<int>(coords.size()); }
};

// Throws unless the point has at least one coordinate and all are finite.
void validate_point(const EvalPoint& x);

enum class ModelKind { wavelike, radial, sigmoid_network, piecewise_linear, linear, external };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct WavelikeParams {
  std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0};
};

struct SigmoidNetworkParams {
  std::vector<double> scale;      // output scale of each sigmoid unit
  std::vector<double> sharpness;  // input scale inside each sigmoid
  std::vector<double> offset;     // additive offset per unit
  std::vector<double> weights;    // aggregation weights
};

struct PiecewiseLinearParams {
  std::vector<double> negative_slopes;
  std::vector<double> positive_slopes;
  std::vector<double> weights;
};

struct LinearParams {
  std::vector<double> coefficients;
  double intercept = 0.0;
};

// Child process speaking the line-CSV protocol: one CSV row per request line on
// stdin, one prediction per line on stdout, flushed per batch.
struct ExternalModelConfig {
  std::vector<std::string> command;  // executable followed by its arguments
  int timeout_ms = 10000;
};

using ModelParams = std::variant<std::monostate, WavelikeParams, SigmoidNetworkParams,
                                 PiecewiseLinearParams, LinearParams, ExternalModelConfig>;

struct ModelSpec {
  ModelKind kind = ModelKind::radial;
  int dimension = 1;
  std::uint64_t seed = 0;
  ModelParams params;  // monostate: resolved from (kind, dimension, seed) on demand

  // Resolves parameters for the given kind. Sampled parameter blocks are
  // bit-identical for identical (kind, dimension, seed). A wavelike spec keeps
  // unit weights for seed 0 and samples them otherwise.
  static ModelSpec builtin(ModelKind kind, int dimension, std::uint64_t seed = 0);

  // Returns a copy with params filled in (no-op when already explicit).
  ModelSpec resolved() const;

  void validate() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& doc);
};

double eval_wavelike(const EvalPoint& x, const WavelikeParams& params);
double eval_radial(const EvalPoint& x);
double eval_sigmoid_network(const EvalPoint& x, const SigmoidNetworkParams& params);
double eval_piecewise_linear(const EvalPoint& x, const PiecewiseLinearParams& params);
double eval_linear(const EvalPoint& x, const LinearParams& params);

// Uniform black-box scalar model.
class Model {
 public:
  virtual ~Model() = default;

  virtual int dimension() const = 0;
  virtual double evaluate(const EvalPoint& x) const = 0;

  // Pointwise by default; external models dispatch the whole batch over the wire.
  virtual std::vector<double> evaluate_batch(std::span<const EvalPoint> points) const;
};

std::vector<double> eval_batch(const Model& model, std::span<const EvalPoint> points);

std::unique_ptr<Model> make_model(const ModelSpec& spec);

// Adapter for ad-hoc callables (wrapped or rescaled models, test doubles).
class FunctionModel final : public Model {
 public:
  FunctionModel(int dimension, std::function<double(const EvalPoint&)> fn)
      : dimension_(dimension), fn_(std::move(fn)) {}

  int dimension() const override { return dimension_; }
  double evaluate(const EvalPoint& x) const override { return fn_(x); }

 private:
  int dimension_;
  std::function<double(const EvalPoint&)> fn_;
};

}  // namespace uqlens
