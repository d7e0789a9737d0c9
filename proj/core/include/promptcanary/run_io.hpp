#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "promptcanary/detector.hpp"
#include "promptcanary/model.hpp"
#include "promptcanary/trainer.hpp"

namespace canary {

/// Names a model the CLI can materialize: a TinyLm checkpoint on disk or a
/// remote endpoint. `kind` selects which of the remaining fields apply.
struct ModelSpec {
  std::string kind;            // "tiny" | "remote"
  std::string checkpoint;      // tiny: .pclm file
  std::string endpoint_url;    // remote
  std::string auth_token_env;  // remote, optional
  std::string model_id;        // remote display label

  bool operator==(const ModelSpec&) const = default;
};

/// Everything a run needs beyond the checkpoints themselves. A persisted
/// config plus the referenced files reproduces the run byte for byte.
struct RunConfig {
  ModelSpec detector;
  ModelSpec backend;
  TrainerConfig trainer;
  std::string instruction_template = DetectionInstructionTemplate::standard().text();
  std::vector<std::string> attacks;  // empty means every heuristic attack
  std::string corpus_path;
  std::string eval_corpus_path;
  std::uint64_t seed = 0;
  std::string output_dir;

  bool operator==(const RunConfig&) const = default;
};

/// Strict JSON round trip: unknown keys anywhere raise SchemaError, malformed
/// JSON raises ParseError. Every field is optional in the file; commands
/// validate the subset they actually use.
std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Key manifest: the one file that stores a key value. Written 0600 so the
/// run directory can be shared without sharing the key; the fingerprint lets
/// other artifacts refer to the key safely.
void write_key_manifest(const SecretKey& key, const std::filesystem::path& path);

/// Loads and validates a manifest: length and alphabet must match the value,
/// the fingerprint must match key_fingerprint.
SecretKey read_key_manifest(const std::filesystem::path& path);

/// Creates the run directory skeleton (checkpoints/, samples/) and returns
/// the root. Existing contents are left alone.
std::filesystem::path ensure_run_dir(const std::filesystem::path& dir);

/// Materializes a ModelSpec. TinyLm checkpoints load fully; remote specs
/// build an adapter without touching the network.
std::unique_ptr<GenerativeModel> load_model(const ModelSpec& spec);

}  // namespace canary
