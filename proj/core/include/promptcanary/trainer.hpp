#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "promptcanary/detector.hpp"
#include "promptcanary/gcg.hpp"
#include "promptcanary/task.hpp"
#include "promptcanary/tiny_lm.hpp"

namespace canary {

/// Hyperparameters of the alternating fine-tuning loop. Attacker and defender
/// take turns each round: the inner search refines one separator against the
/// current detector, the outer loop then updates the detector against the
/// payloads that separator produces.
struct TrainerConfig {
  int rounds = 3;
  int inner_steps = 10;  // separator-search iterations per round
  int inner_batch = 8;   // target tasks scored per inner iteration
  int outer_steps = 500; // detector updates per round
  int outer_batch = 2;   // payloads (and clean items) per update
  double alpha = 1.0;    // backend-term weight inside the separator search
  double beta = 1.0;     // clean-utility weight of the detector update
  double contamination_weight = 1.0;  // contaminated-term weight; 0 ablates it
  double outer_learning_rate = 2.5e-5;
  std::size_t separator_length = 8;
  GcgConfig gcg;  // screening and candidate budget of the inner search
  std::uint64_t seed = 0;

  bool operator==(const TrainerConfig&) const = default;
};

std::string trainer_config_to_json(const TrainerConfig& cfg);
TrainerConfig trainer_config_from_json(const std::string& text);

/// One inner-search iteration: which targets were scored and where the
/// separator moved. `objective` is the batch objective at `separator`, enough
/// to replay the whole trace against the round's starting detector.
struct InnerRecord {
  int iteration = 0;
  std::vector<std::size_t> target_indices;  // into the training corpus
  std::vector<TokenId> separator;
  double objective = 0.0;

  bool operator==(const InnerRecord&) const = default;
};

/// One detector update: both key losses are measured before the step.
struct OuterRecord {
  int step = 0;
  std::vector<std::size_t> contaminated_indices;  // into the round's payloads
  std::vector<std::size_t> clean_indices;         // into the training corpus
  double contaminated_key_loss = 0.0;
  double clean_key_loss = 0.0;

  bool operator==(const OuterRecord&) const = default;
};

struct RoundRecord {
  int round = 0;  // 1-based
  std::size_t eval_task_index = 0;
  std::vector<std::size_t> train_task_indices;
  std::vector<TokenId> separator_tokens;  // the round's final separator
  std::string separator_text;
  std::vector<InnerRecord> inner;
  std::vector<OuterRecord> outer;
  std::vector<ContaminatedSample> contaminated;  // one payload per training task

  bool operator==(const RoundRecord&) const = default;
};

struct TrainingRunRecord {
  std::string detector_model_id;
  std::vector<RoundRecord> rounds;
};

/// Alternating minimax fine-tuning of a detection model.
///
/// Each round draws one held-in injected task, splits the corpus into that
/// task and the rest, sharpens the separator with a greedy coordinate search
/// against detector evasion plus backend compliance, materializes contaminated
/// payloads for every training task, and finally fine-tunes the detector to
/// lose the key on those payloads while keeping it on clean data.
///
/// Every random draw derives from (seed, round, purpose), so a run with fewer
/// rounds is a bit-exact prefix of a longer one, and the detector is rounded
/// to float32 at each round boundary so a reloaded checkpoint continues
/// bit-identically.
class MinimaxTrainer {
public:
  /// `detector` is updated in place. `backend` only provides losses and token
  /// gradients. When `run_dir` is set, checkpoints, separators, payloads,
  /// loss CSVs and the full run record are written beneath it.
  MinimaxTrainer(const GenerativeModel& backend, TinyLm& detector,
                 DetectionInstructionTemplate instruction, SecretKey key, TaskCorpus corpus,
                 TrainerConfig cfg, std::filesystem::path run_dir = {});

  TrainingRunRecord run();

private:
  RoundRecord run_round(int round, std::vector<TokenId>& separator);
  TokenObjective inner_objective(const std::vector<std::size_t>& target_indices,
                                 const Task& eval_task) const;
  void persist_round(const RoundRecord& round) const;
  void persist_run(const TrainingRunRecord& record) const;

  const GenerativeModel& backend_;
  TinyLm& detector_;
  DetectionInstructionTemplate instruction_;
  SecretKey key_;
  TaskCorpus corpus_;
  TrainerConfig cfg_;
  std::filesystem::path run_dir_;
  std::string rendered_;  // instruction with the key substituted
};

}  // namespace canary
