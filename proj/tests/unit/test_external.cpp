#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"

#include "uqlens/errors.hpp"
#include "uqlens/external_model.hpp"
#include "uqlens/model.hpp"

using namespace uqlens;

// Injected by the build: absolute path of the protocol stub executable.
#ifndef UQLENS_EXT_STUB
#error "UQLENS_EXT_STUB must point at the test stub binary"
#endif

namespace {

ExternalModelConfig stub_config(std::vector<std::string> args, int timeout_ms = 5000) {
  ExternalModelConfig cfg;
  cfg.command.push_back(UQLENS_EXT_STUB);
  for (std::string& a : args) cfg.command.push_back(std::move(a));
  cfg.timeout_ms = timeout_ms;
  return cfg;
}

}  // namespace

TEST_CASE("external model round-trips rows at full precision") {
  const auto model = make_external_model(stub_config({"sum"}), 3);
  CHECK(model->dimension() == 3);

  // Values with no short decimal form survive the %.17g wire format exactly.
  const double a = 1.0 / 3.0;
  const double b = std::sqrt(2.0);
  const double c = -7.25e-13;
  CHECK(model->evaluate(EvalPoint({a, b, c})) == a + b + c);

  const std::vector<EvalPoint> batch{EvalPoint({1.0, 2.0, 3.0}), EvalPoint({0.5, 0.25, 0.125}),
                                     EvalPoint({-1.0, -2.0, 4.0})};
  const std::vector<double> out = model->evaluate_batch(batch);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == 6.0);
  CHECK(out[1] == 0.875);
  CHECK(out[2] == 1.0);
}

TEST_CASE("external model applies the configured command arguments") {
  const auto model = make_external_model(stub_config({"affine", "0.5"}), 2);
  CHECK(model->evaluate(EvalPoint({1.0, 2.0})) == 3.5);
}

TEST_CASE("a slow responder fails with a timeout, not a hang") {
  const auto model = make_external_model(stub_config({"slow", "400"}, 50), 2);
  CHECK_THROWS_AS(model->evaluate(EvalPoint({1.0, 1.0})), EvalError);
}

TEST_CASE("a silent responder also times out") {
  const auto model = make_external_model(stub_config({"silent"}, 100), 2);
  CHECK_THROWS_AS(model->evaluate(EvalPoint({1.0, 1.0})), EvalError);
}

TEST_CASE("malformed predictions are protocol errors") {
  const auto model = make_external_model(stub_config({"garbage"}), 2);
  CHECK_THROWS_AS(model->evaluate(EvalPoint({1.0, 1.0})), EvalError);
}

TEST_CASE("an early-exiting child fails on the row where it died") {
  const auto model = make_external_model(stub_config({"quit-after", "1"}), 2);
  const std::vector<EvalPoint> batch{EvalPoint({1.0, 1.0}), EvalPoint({2.0, 2.0}),
                                     EvalPoint({3.0, 3.0})};
  try {
    model->evaluate_batch(batch);
    FAIL("expected an EvalError");
  } catch (const EvalError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("a missing executable surfaces as an evaluation error") {
  ExternalModelConfig cfg;
  cfg.command = {"/nonexistent/uqlens-stub-missing"};
  cfg.timeout_ms = 1000;
  const auto model = make_external_model(cfg, 2);
  CHECK_THROWS_AS(model->evaluate(EvalPoint({1.0, 1.0})), EvalError);
}

TEST_CASE("external specs build through the generic model factory") {
  ModelSpec spec;
  spec.kind = ModelKind::external;
  spec.dimension = 2;
  ExternalModelConfig cfg = stub_config({"sum"});
  spec.params = cfg;

  const auto model = make_model(spec);
  CHECK(model->evaluate(EvalPoint({2.0, 3.0})) == 5.0);

  // JSON round-trip keeps the command and the protocol marker.
  const auto doc = spec.to_json();
  CHECK(doc.at("params").at("protocol").get<std::string>() == "line_csv");
  const ModelSpec restored = ModelSpec::from_json(doc);
  const auto again = make_model(restored);
  CHECK(again->evaluate(EvalPoint({2.0, 3.0})) == 5.0);
}
