#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "promptcanary/model.hpp"

namespace canary {

/// Half-open range of slot indices spliced into a prompt.
struct SlotRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// A prompt is assembled from fixed text and decoded slot ranges, in order.
using PromptPiece = std::variant<std::string, SlotRange>;

/// One weighted teacher-forcing loss: weight * loss(continuation | prompt
/// built from pieces). Multiple terms over multiple models form the
/// optimization target; every model must share one tokenizer so slot ids mean
/// the same thing everywhere.
struct ObjectiveTerm {
  double weight = 1.0;
  const GenerativeModel* model = nullptr;
  std::vector<PromptPiece> pieces;
  std::string continuation;
};

/// Differentiable scalar objective over a fixed-length token slot.
class TokenObjective {
public:
  TokenObjective(std::vector<ObjectiveTerm> terms, std::size_t slot_length);

  double value(const std::vector<TokenId>& slot) const;

  /// d value / d one-hot(slot[p]) for every slot position; slot_length x vocab.
  TokenGradients slot_gradients(const std::vector<TokenId>& slot) const;

  std::size_t slot_length() const { return slot_length_; }
  const CharTokenizer& tokenizer() const;
  const std::vector<ObjectiveTerm>& terms() const { return terms_; }

private:
  std::vector<ObjectiveTerm> terms_;
  std::size_t slot_length_;
};

struct GcgConfig {
  int top_k = 8;
  int candidates_per_step = 32;
  std::uint64_t seed = 0;
  /// Substitution pool; empty means every text id of the objective's tokenizer.
  std::vector<TokenId> allowed_tokens;

  bool operator==(const GcgConfig&) const = default;
};

/// Uniform i.i.d. draw from `vocab`, deterministic per seed.
std::vector<TokenId> random_token_init(std::size_t length, const std::vector<TokenId>& vocab,
                                       std::uint64_t seed);

struct GcgStepResult {
  std::vector<TokenId> tokens;
  double value = 0.0;
};

/// One greedy coordinate step: gradient-screen top_k tokens per mutable
/// position, sample candidates_per_step single-token substitutions from that
/// pool (all of them when the pool is smaller), evaluate each exactly, and
/// return the best of candidates plus the incumbent. The value therefore
/// never increases for a deterministic objective.
GcgStepResult gcg_step(const TokenObjective& objective, const std::vector<TokenId>& tokens,
                       const std::vector<std::size_t>& mutable_positions, const GcgConfig& cfg);

struct GcgRunResult {
  std::vector<TokenId> tokens;
  std::vector<double> trace;  // steps+1 values, starting at the initial tokens
};

/// Runs `steps` coordinate steps, deriving a fresh candidate-sampling seed per
/// step from cfg.seed.
GcgRunResult gcg_run(const TokenObjective& objective, std::vector<TokenId> tokens,
                     const std::vector<std::size_t>& mutable_positions, int steps,
                     const GcgConfig& cfg);

/// "step,value" CSV, one line per trace entry.
void write_loss_trace(const std::vector<double>& trace, const std::filesystem::path& path);

}  // namespace canary
