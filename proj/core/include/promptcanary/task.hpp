#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace canary {

/// One instruction-following exercise: an instruction, the data it applies
/// to, and the output a competent model should produce.
struct Task {
  std::string instruction;
  std::string data;
  std::string desired_output;
  std::string task_kind;

  bool operator==(const Task&) const = default;
};

/// A data item as a detector or backend sees it: either the target task's
/// data untouched (label "clean") or that data with an injected task spliced
/// in after a separator (label "contaminated").
struct ContaminatedSample {
  std::string payload;
  std::string separator;
  std::string attack_id;   // "none" for clean samples
  std::string label;       // "clean" | "contaminated"
  Task target;
  std::optional<Task> injected;

  bool operator==(const ContaminatedSample&) const = default;
};

struct TaskCorpus {
  std::vector<Task> tasks;
  std::string corpus_id;

  bool operator==(const TaskCorpus&) const = default;
};

/// Builds the classic injected payload: target data, separator, injected
/// instruction, injected data, space-joined with empty parts dropped.
ContaminatedSample contaminate(const Task& target, const Task& injected,
                               const std::string& separator,
                               const std::string& attack_id);

/// Wraps target data untouched as a labeled clean sample.
ContaminatedSample clean_sample(const Task& target);

/// JSONL, one task per line. corpus_id is the file stem.
TaskCorpus load_corpus(const std::filesystem::path& path);
void save_corpus(const TaskCorpus& corpus, const std::filesystem::path& path);

/// JSONL, one contaminated/clean sample per line.
std::vector<ContaminatedSample> load_samples(const std::filesystem::path& path);
void save_samples(const std::vector<ContaminatedSample>& samples,
                  const std::filesystem::path& path);

}  // namespace canary
