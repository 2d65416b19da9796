#pragma once

#include <memory>

#include "uqlens/model.hpp"

namespace uqlens {

// Spawns the configured command and evaluates points over the line-CSV
// protocol. Batches to one child are serialized; rows and predictions carry
// full round-trip precision. Protocol or process failures surface as
// EvalError with the offending row index.
std::unique_ptr<Model> make_external_model(const ExternalModelConfig& config, int dimension);

}  // namespace uqlens
