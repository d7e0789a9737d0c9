#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "promptcanary/tokenizer.hpp"

namespace canary {

struct Capabilities {
  bool generate = false;
  bool loss = false;            // sequence_loss / token_span_loss
  bool token_gradients = false;
  bool trainable = false;       // apply_gradient_update
};

/// Decoding knobs. temperature 0 means greedy; any positive temperature
/// samples from softmax(logits / temperature) with an RNG seeded by `seed`,
/// so every setting is deterministic.
struct GenerationConfig {
  int max_tokens = 32;
  double temperature = 0.0;
  std::uint64_t seed = 0;
};

/// Half-open range of token positions whose tokens are scored as
/// cross-entropy targets given everything before them.
struct ScoredSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// One weighted teacher-forcing term: weight * sequence_loss(prompt, continuation).
struct LossTerm {
  double weight = 1.0;
  std::string prompt;
  std::string continuation;
};

/// A loss over model parameters, expressed as a weighted sum of sequence
/// losses. Weights may be negative; a gradient step on a negative-weight term
/// is ascent on that term.
struct ParameterObjective {
  std::vector<LossTerm> terms;
};

/// Gradient of a scalar loss with respect to the one-hot encoding of selected
/// input tokens. Row i corresponds to mutable_positions[i], columns to vocab ids.
using TokenGradients = Eigen::MatrixXd;

/// Common surface for anything that completes text. Local models additionally
/// expose losses, token gradients, and parameter updates; calling an
/// unsupported operation raises CapabilityError. Read-only operations on a
/// frozen model are safe to call concurrently; apply_gradient_update assumes
/// a single writer and no concurrent readers.
class GenerativeModel {
public:
  virtual ~GenerativeModel() = default;

  virtual std::string model_id() const = 0;
  virtual Capabilities capabilities() const = 0;

  /// Completes `prompt`. Never includes the prompt in the return value.
  virtual std::string generate(std::string_view prompt, const GenerationConfig& cfg) const = 0;

  /// -sum_i log p(continuation_i | prompt, continuation_<i). Requires `loss`.
  virtual double sequence_loss(std::string_view prompt, std::string_view continuation) const;

  /// Same loss over an explicit token stream: tokens in span are scored given
  /// all preceding tokens. Requires `loss`.
  virtual double token_span_loss(std::span<const TokenId> tokens, ScoredSpan span) const;

  /// d token_span_loss / d one-hot(tokens[p]) for each p in mutable_positions.
  /// Shape |mutable_positions| x vocab_size. Requires `token_gradients`.
  virtual TokenGradients token_gradients(std::span<const TokenId> tokens,
                                         std::span<const std::size_t> mutable_positions,
                                         ScoredSpan span) const;

  /// One plain gradient-descent step on the objective: theta -= lr * grad.
  /// Requires `trainable`.
  virtual void apply_gradient_update(const ParameterObjective& objective, double learning_rate);

  /// Tokenizer backing the token-level operations. Requires `loss`.
  virtual const CharTokenizer& tokenizer() const;
};

}  // namespace canary
