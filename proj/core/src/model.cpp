#include "promptcanary/model.hpp"

#include "promptcanary/errors.hpp"

namespace canary {

double GenerativeModel::sequence_loss(std::string_view, std::string_view) const {
  throw CapabilityError(model_id() + " does not expose sequence losses");
}

double GenerativeModel::token_span_loss(std::span<const TokenId>, ScoredSpan) const {
  throw CapabilityError(model_id() + " does not expose sequence losses");
}

TokenGradients GenerativeModel::token_gradients(std::span<const TokenId>,
                                                std::span<const std::size_t>,
                                                ScoredSpan) const {
  throw CapabilityError(model_id() + " does not expose token gradients");
}

void GenerativeModel::apply_gradient_update(const ParameterObjective&, double) {
  throw CapabilityError(model_id() + " is not trainable");
}

const CharTokenizer& GenerativeModel::tokenizer() const {
  throw CapabilityError(model_id() + " does not expose a tokenizer");
}

}  // namespace canary
