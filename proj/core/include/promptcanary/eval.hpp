#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "promptcanary/detector.hpp"
#include "promptcanary/task.hpp"

namespace canary {

/// How many samples a detection metric saw and how many it flagged.
struct DetectionCounts {
  std::size_t total = 0;
  std::size_t flagged = 0;
};

/// Fraction of clean samples the detector flags as contaminated. `workers`
/// bounds the thread pool; 0 picks the hardware concurrency. Aggregation is
/// index-ordered, so the result does not depend on the pool size.
double compute_fpr(const DetectorProfile& profile, const std::vector<ContaminatedSample>& clean,
                   DetectionCounts* counts = nullptr, int workers = 0);

struct FnrCell {
  std::size_t total = 0;
  std::size_t passed = 0;  // contaminated samples the detector let through
};

/// Miss rate, cell-averaged: samples group by (injected task kind, target
/// task kind), each cell contributes its own miss fraction, and `fnr` is the
/// unweighted mean over cells. Samples without an injected task group by
/// attack id instead.
struct FnrReport {
  double fnr = 0.0;
  std::map<std::string, std::map<std::string, FnrCell>> cells;  // injected kind -> target kind
  std::size_t total = 0;
  std::size_t passed = 0;
};

FnrReport compute_fnr(const DetectorProfile& profile,
                      const std::vector<ContaminatedSample>& contaminated, int workers = 0);

/// Decides whether a backend output completed the task.
using SuccessJudge = std::function<bool(const std::string& desired, const std::string& actual)>;

bool exact_match_judge(const std::string& desired, const std::string& actual);

/// Pulls the success target out of a sample, for attacks whose goal is not
/// the injected task's desired output.
using GoalFn = std::function<std::string(const ContaminatedSample&)>;

struct UtilityCounts {
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // backend failures (context overflow and the like)
  std::size_t successes = 0;
};

/// Performance with no attack: the backend runs each sample's injected task
/// alone and the judge scores it. Backend failures are excluded from the
/// denominator and counted.
double compute_pna_i(const GenerativeModel& backend,
                     const std::vector<ContaminatedSample>& samples,
                     const GenerationConfig& generation, SuccessJudge judge = {},
                     UtilityCounts* counts = nullptr, int workers = 0);

/// Attack success: the backend runs the target instruction over the
/// contaminated payload and the judge compares against the goal (default: the
/// injected task's desired output).
double compute_asv(const GenerativeModel& backend,
                   const std::vector<ContaminatedSample>& samples,
                   const GenerationConfig& generation, SuccessJudge judge = {}, GoalFn goal = {},
                   UtilityCounts* counts = nullptr, int workers = 0);

/// Distinct (target, injected) index pairs: the full product when it fits the
/// budget, otherwise a uniform sample without replacement. Ascending either
/// way.
std::vector<std::pair<std::size_t, std::size_t>> build_grid(std::size_t n_targets,
                                                            std::size_t n_injected,
                                                            std::size_t budget,
                                                            std::uint64_t seed);

/// Deterministic toy corpus cycling three task kinds over random lowercase
/// words: copy ("copy the text:"), reverse ("reverse the text:") and classify
/// ("name the marker:", a qq or xx marker embedded in the word). Data strings
/// are distinct within a corpus and contain no instruction punctuation.
TaskCorpus generate_synthetic_corpus(std::size_t count, std::uint64_t seed,
                                     const std::string& corpus_id = "synthetic");

struct SyntheticSplit {
  TaskCorpus train;
  TaskCorpus eval;
};

/// Train and eval corpora drawn in one pass, so their data items never
/// overlap by construction.
SyntheticSplit generate_synthetic_split(std::size_t train_count, std::size_t eval_count,
                                        std::uint64_t seed);

/// One experiment's numbers. Absent metrics stay null in the JSON.
struct MetricsReport {
  std::optional<double> fpr;
  std::optional<double> fnr;
  std::optional<double> pna_i;
  std::optional<double> asv;
  std::map<std::string, std::size_t> counts;
  std::map<std::string, std::string> metadata;
};

/// Byte-stable: keys sorted, numbers shortest round-trip.
std::string metrics_to_json(const MetricsReport& report);
void save_metrics(const MetricsReport& report, const std::filesystem::path& path);

/// Strict inverse of metrics_to_json: unknown keys raise SchemaError,
/// malformed JSON raises ParseError.
MetricsReport metrics_from_json(const std::string& text);
MetricsReport load_metrics(const std::filesystem::path& path);

std::string metrics_to_markdown(const MetricsReport& report);
void save_markdown(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace canary
