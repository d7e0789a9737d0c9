#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptcanary/detector.hpp"
#include "promptcanary/gcg.hpp"
#include "promptcanary/task.hpp"

namespace canary {

/// The five classic separator styles. Two catalogs exist because the
/// published strings differ slightly between sources; kPrimary is canonical
/// and kAlternate is available behind config.
enum class SeparatorCatalog { kPrimary, kAlternate };

struct HeuristicSeparators {
  std::string naive;
  std::string escape;
  std::string context_ignoring;
  std::string fake_completion;
  std::string combined;
};

const HeuristicSeparators& heuristic_separators(
    SeparatorCatalog catalog = SeparatorCatalog::kPrimary);

/// Ids accepted by heuristic_attack, in catalog order.
const std::vector<std::string>& heuristic_attack_ids();

/// Splices the injected task after the catalog separator for `attack_id`
/// (naive, escape, context_ignoring, fake_completion, combined).
ContaminatedSample heuristic_attack(const Task& target, const Task& injected,
                                    const std::string& attack_id,
                                    SeparatorCatalog catalog = SeparatorCatalog::kPrimary);

/// The refusal every availability payload tries to force.
const std::string& availability_refusal();

/// Combined-separator payload whose injected task instructs the model to
/// answer with the refusal sentence and nothing else.
ContaminatedSample availability_attack(const Task& target);

/// Separator used by the first detector-aware heuristic; the second variant
/// appends the trailer after the injected task.
const std::string& adaptive_heuristic_separator();
const std::string& adaptive_heuristic_trailer();

/// variant 1: x_t || z_adaptive || s_e || x_e
/// variant 2: the same with the trailer appended.
ContaminatedSample heuristic_adaptive_attack(const Task& target, const Task& injected,
                                             int variant);

/// Reference triggers reported for full-scale searches against production
/// models. Stored as fixtures: detection experiments replay them, nothing
/// here regenerates them.
const std::string& universal_separator_fixture();
const std::string& neuralexec_prefix_fixture();
const std::string& neuralexec_suffix_fixture();
const std::string& finetuning_separator_fixture();

/// ---- optimization-based attacks ----
/// Each search minimizes the backend's loss of the injected answer with a
/// greedy coordinate search; cfg.gcg.seed is the master seed of the whole
/// search (initialization included).

struct SeparatorSearchConfig {
  std::size_t separator_length = 8;
  int steps = 50;
  GcgConfig gcg;
};

struct OptimizedSeparatorResult {
  std::vector<TokenId> tokens;
  std::string text;
  std::vector<double> trace;
};

/// One separator that works across every (target, injected) pair: the loss is
/// averaged over the pairs.
struct TaskPair {
  Task target;
  Task injected;
};

OptimizedSeparatorResult optimize_universal_separator(const GenerativeModel& backend,
                                                      const std::vector<TaskPair>& pairs,
                                                      const SeparatorSearchConfig& cfg);

/// Materializes payloads for a separator found above (or a fixture).
std::vector<ContaminatedSample> apply_separator(const std::string& separator_text,
                                                const std::vector<TaskPair>& pairs,
                                                const std::string& attack_id);

struct TriggerSearchConfig {
  std::size_t prefix_length = 8;
  std::size_t suffix_length = 4;
  int steps = 50;
  GcgConfig gcg;
};

struct OptimizedTriggerResult {
  std::vector<TokenId> prefix_tokens, suffix_tokens;
  std::string prefix_text, suffix_text;
  std::vector<double> trace;
};

/// Execution-trigger shape: x_t || prefix || s_e || x_e || suffix, prefix and
/// suffix optimized jointly; the injected task text stays untouched.
OptimizedTriggerResult optimize_neuralexec_trigger(const GenerativeModel& backend,
                                                   const std::vector<TaskPair>& pairs,
                                                   const TriggerSearchConfig& cfg);

std::vector<ContaminatedSample> apply_trigger(const std::string& prefix_text,
                                              const std::string& suffix_text,
                                              const std::vector<TaskPair>& pairs,
                                              const std::string& attack_id);

struct PayloadSearchConfig {
  std::size_t payload_length = 16;
  int steps = 50;
  GcgConfig gcg;
};

struct OptimizedPayloadResult {
  std::vector<TokenId> tokens;
  std::string text;
  std::vector<double> trace;
};

/// Replaces the whole data item with optimized tokens driving the backend
/// toward desired_output. Passing the target instruction itself as
/// desired_output gives the prompt-stealing variant.
OptimizedPayloadResult optimize_full_contamination(const GenerativeModel& backend,
                                                   const Task& target,
                                                   const std::string& desired_output,
                                                   const PayloadSearchConfig& cfg);

/// Full-contamination payload as a labeled sample (no injected task text).
ContaminatedSample full_contamination_sample(const Task& target, const std::string& payload_text,
                                             const std::string& attack_id);

struct AdaptiveSearchConfig {
  double gamma = 1.0;
  int iterations = 50;
  std::size_t payload_length = 20;
  int key_length = kDefaultKeyLength;
  std::string key_alphabet = kDefaultKeyAlphabet;
  GcgConfig gcg;
};

struct AdaptivePayloadResult {
  std::vector<TokenId> tokens;
  std::string text;
  std::vector<double> trace;  // objective value per iteration, surrogate key of that iteration
  std::string final_surrogate_key;
  double final_objective_at_initial = 0.0;  // final iteration's objective, initial tokens
  double final_objective_at_result = 0.0;   // final iteration's objective, returned tokens
};

/// Detector-aware search that cannot see the deployed key: each iteration
/// draws a fresh surrogate key k' and takes one coordinate step on
/// loss(k', detector(instruction_k' || x_c)) + gamma * loss(desired_output,
/// backend(s_t || x_c)). gamma 0 reduces it to pure evasion.
AdaptivePayloadResult optimize_adaptive_contamination(const GenerativeModel& backend,
                                                      const GenerativeModel& detector,
                                                      const DetectionInstructionTemplate& tmpl,
                                                      const Task& target,
                                                      const std::string& desired_output,
                                                      const AdaptiveSearchConfig& cfg);

}  // namespace canary
