#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptcanary/detector.hpp"
#include "promptcanary/task.hpp"
#include "promptcanary/tiny_lm.hpp"

namespace canary {

/// One supervised example: the model is trained to continue `prompt` with
/// `target` followed by end-of-sequence.
struct PretrainExample {
  std::string prompt;
  std::string target;

  bool operator==(const PretrainExample&) const = default;
};

struct PretrainConfig {
  int steps = 1000;
  int batch_size = 8;
  double learning_rate = 1e-3;  // Adam step size
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct PretrainStats {
  std::vector<double> losses;  // mean per-token loss of each step's batch
};

/// Adam over per-token-normalized cross entropy on uniformly sampled batches.
/// This is base-model plumbing; the adversarial loop itself uses the model's
/// plain gradient-descent update.
PretrainStats pretrain(TinyLm& model, const std::vector<PretrainExample>& examples,
                       const PretrainConfig& cfg);

/// Instruction-following examples: join(instruction, data) -> desired output.
std::vector<PretrainExample> task_examples(const TaskCorpus& corpus);

/// Key-echo examples: a rendered detection instruction followed by distractor
/// text, with the key as target. Keys are drawn fresh per example so the model
/// learns to copy whatever key the instruction carries.
std::vector<PretrainExample> echo_examples(const DetectionInstructionTemplate& tmpl,
                                           const std::vector<std::string>& distractors,
                                           int n_examples, std::uint64_t seed,
                                           int key_length = kDefaultKeyLength,
                                           const std::string& key_alphabet = kDefaultKeyAlphabet);

/// Distractor texts shaped like everything a deployed detector sees: every
/// clean data item in the corpus plus, per heuristic attack (and the
/// availability attack), up to `per_attack` contaminated payloads over task
/// pairs drawn by seed. An echo model trained on these repeats its key
/// through clean and attacked data alike, which is the intended starting
/// point for adversarial fine-tuning.
std::vector<std::string> echo_distractors(const TaskCorpus& corpus, std::size_t per_attack,
                                          std::uint64_t seed);

}  // namespace canary
