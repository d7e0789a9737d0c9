#include "promptcanary/gcg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "promptcanary/errors.hpp"
#include "promptcanary/rng.hpp"

namespace canary {

namespace {

/// Token stream for one term at a given slot, with the scored span and the
/// stream positions of every slot index that appears.
struct BuiltPrompt {
  std::vector<TokenId> tokens;
  ScoredSpan span;
  std::vector<std::pair<std::size_t, std::size_t>> slot_to_stream;  // (slot idx, stream idx)
};

BuiltPrompt build_prompt(const ObjectiveTerm& term, const std::vector<TokenId>& slot) {
  const auto& tok = term.model->tokenizer();
  BuiltPrompt built;
  for (const auto& piece : term.pieces) {
    if (const auto* text = std::get_if<std::string>(&piece)) {
      const auto ids = tok.encode(*text);
      built.tokens.insert(built.tokens.end(), ids.begin(), ids.end());
    } else {
      const auto& range = std::get<SlotRange>(piece);
      for (std::size_t i = range.begin; i < range.end; ++i) {
        built.slot_to_stream.emplace_back(i, built.tokens.size());
        built.tokens.push_back(slot[i]);
      }
    }
  }
  const std::size_t prompt_len = built.tokens.size();
  const auto cont = tok.encode(term.continuation);
  built.tokens.insert(built.tokens.end(), cont.begin(), cont.end());
  built.span = {prompt_len, built.tokens.size()};
  return built;
}

}  // namespace

TokenObjective::TokenObjective(std::vector<ObjectiveTerm> terms, std::size_t slot_length)
    : terms_(std::move(terms)), slot_length_(slot_length) {
  if (terms_.empty()) throw InvalidArgumentError("objective has no terms");
  if (slot_length_ == 0) throw InvalidArgumentError("slot length must be positive");
  for (const auto& term : terms_) {
    if (!term.model) throw InvalidArgumentError("objective term has no model");
    if (!term.model->capabilities().loss)
      throw CapabilityError(term.model->model_id() + " cannot score objective terms");
    if (term.continuation.empty())
      throw InvalidArgumentError("objective term has an empty continuation");
    if (!std::isfinite(term.weight))
      throw InvalidArgumentError("objective term weight is not finite");
    if (!(term.model->tokenizer() == terms_.front().model->tokenizer()))
      throw InvalidArgumentError("objective terms must share one tokenizer");
    for (const auto& piece : term.pieces)
      if (const auto* range = std::get_if<SlotRange>(&piece))
        if (range->begin > range->end || range->end > slot_length_)
          throw InvalidArgumentError("slot range exceeds slot length");
  }
}

const CharTokenizer& TokenObjective::tokenizer() const {
  return terms_.front().model->tokenizer();
}

double TokenObjective::value(const std::vector<TokenId>& slot) const {
  if (slot.size() != slot_length_) throw InvalidArgumentError("slot has the wrong length");
  double total = 0.0;
  for (const auto& term : terms_) {
    const auto built = build_prompt(term, slot);
    total += term.weight * term.model->token_span_loss(built.tokens, built.span);
  }
  return total;
}

TokenGradients TokenObjective::slot_gradients(const std::vector<TokenId>& slot) const {
  if (slot.size() != slot_length_) throw InvalidArgumentError("slot has the wrong length");
  const int vocab = tokenizer().vocab_size();
  TokenGradients grads =
      TokenGradients::Zero(static_cast<Eigen::Index>(slot_length_), vocab);
  for (const auto& term : terms_) {
    if (!term.model->capabilities().token_gradients)
      throw CapabilityError(term.model->model_id() + " cannot provide token gradients");
    const auto built = build_prompt(term, slot);
    if (built.slot_to_stream.empty()) continue;
    std::vector<std::size_t> positions;
    positions.reserve(built.slot_to_stream.size());
    for (const auto& [slot_idx, stream_idx] : built.slot_to_stream)
      positions.push_back(stream_idx);
    const TokenGradients term_grads =
        term.model->token_gradients(built.tokens, positions, built.span);
    for (std::size_t i = 0; i < built.slot_to_stream.size(); ++i)
      grads.row(static_cast<Eigen::Index>(built.slot_to_stream[i].first)) +=
          term.weight * term_grads.row(static_cast<Eigen::Index>(i));
  }
  return grads;
}

std::vector<TokenId> random_token_init(std::size_t length, const std::vector<TokenId>& vocab,
                                       std::uint64_t seed) {
  if (length == 0) throw InvalidArgumentError("separator length must be positive");
  if (vocab.empty()) throw InvalidArgumentError("token pool is empty");
  std::mt19937_64 rng(seed);
  std::vector<TokenId> out(length);
  for (auto& id : out) id = vocab[static_cast<std::size_t>(uniform_below(rng, vocab.size()))];
  return out;
}

GcgStepResult gcg_step(const TokenObjective& objective, const std::vector<TokenId>& tokens,
                       const std::vector<std::size_t>& mutable_positions, const GcgConfig& cfg) {
  if (tokens.size() != objective.slot_length())
    throw InvalidArgumentError("slot has the wrong length");
  if (cfg.top_k <= 0 || cfg.candidates_per_step <= 0)
    throw InvalidArgumentError("top_k and candidates_per_step must be positive");
  for (std::size_t p : mutable_positions)
    if (p >= tokens.size())
      throw InvalidArgumentError("mutable position " + std::to_string(p) + " out of range");

  GcgStepResult best;
  best.tokens = tokens;
  best.value = objective.value(tokens);

  if (mutable_positions.empty()) return best;

  const std::vector<TokenId>& pool_tokens =
      cfg.allowed_tokens.empty() ? objective.tokenizer().text_ids() : cfg.allowed_tokens;
  if (pool_tokens.empty()) throw InvalidArgumentError("token pool is empty");

  const TokenGradients grads = objective.slot_gradients(tokens);
  if (!grads.allFinite()) throw NonFiniteError("non-finite token gradients during screening");

  // most-negative gradient first: the first-order estimate of the best swaps
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k), pool_tokens.size());
  std::vector<std::pair<std::size_t, TokenId>> candidate_pool;
  candidate_pool.reserve(mutable_positions.size() * k);
  std::vector<TokenId> ranked(pool_tokens);
  for (std::size_t p : mutable_positions) {
    const auto row = grads.row(static_cast<Eigen::Index>(p));
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k),
                      ranked.end(), [&](TokenId a, TokenId b) {
                        if (row(a) != row(b)) return row(a) < row(b);
                        return a < b;
                      });
    for (std::size_t i = 0; i < k; ++i) candidate_pool.emplace_back(p, ranked[i]);
  }

  // sample without replacement; a pool no larger than the budget is used whole
  std::mt19937_64 rng(cfg.seed);
  const std::vector<std::size_t> order = sample_without_replacement(
      candidate_pool.size(), static_cast<std::size_t>(cfg.candidates_per_step), rng);
  const std::size_t n_eval = order.size();

  bool any_finite = std::isfinite(best.value);
  std::vector<TokenId> trial = tokens;
  for (std::size_t i = 0; i < n_eval; ++i) {
    const auto& [p, v] = candidate_pool[order[i]];
    trial[p] = v;
    const double value = objective.value(trial);
    trial[p] = tokens[p];
    if (!std::isfinite(value)) continue;
    if (!any_finite || value < best.value) {
      best.tokens = tokens;
      best.tokens[p] = v;
      best.value = value;
      any_finite = true;
    }
  }
  if (!any_finite)
    throw NonFiniteError("every candidate in this coordinate step evaluated non-finite");
  return best;
}

GcgRunResult gcg_run(const TokenObjective& objective, std::vector<TokenId> tokens,
                     const std::vector<std::size_t>& mutable_positions, int steps,
                     const GcgConfig& cfg) {
  if (steps < 0) throw InvalidArgumentError("steps must be >= 0");
  GcgRunResult result;
  result.trace.reserve(static_cast<std::size_t>(steps) + 1);
  result.trace.push_back(objective.value(tokens));
  for (int s = 0; s < steps; ++s) {
    GcgConfig step_cfg = cfg;
    step_cfg.seed = seed_mix(cfg.seed, static_cast<std::uint64_t>(s));
    auto step = gcg_step(objective, tokens, mutable_positions, step_cfg);
    tokens = std::move(step.tokens);
    result.trace.push_back(step.value);
  }
  result.tokens = std::move(tokens);
  return result;
}

void write_loss_trace(const std::vector<double>& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "step,value\n";
  out.precision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << trace[i] << '\n';
}

}  // namespace canary
