#include "promptcanary/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <utility>

#include <json.hpp>

#include "promptcanary/errors.hpp"
#include "promptcanary/rng.hpp"
#include "promptcanary/text.hpp"

namespace canary {
namespace {

using nlohmann::json;

/// Non-overlapping seed streams per (round, purpose, index).
enum Stream : std::uint64_t {
  kInitSeparator = 0,
  kPickEvalTask = 1,
  kInnerBatch = 2,
  kInnerSearch = 3,
  kOuterContaminated = 4,
  kOuterClean = 5,
};

std::uint64_t stream(int round, Stream tag, int index) {
  return (static_cast<std::uint64_t>(round) << 40) |
         (static_cast<std::uint64_t>(tag) << 32) | static_cast<std::uint64_t>(index);
}

std::string leading(const std::string& joined) {
  return joined.empty() ? joined : joined + " ";
}

std::string trailing(const std::string& joined) {
  return joined.empty() ? joined : " " + joined;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgumentError("trainer config: " + what);
}

json gcg_to_json(const GcgConfig& g) {
  return json{{"top_k", g.top_k},
              {"candidates_per_step", g.candidates_per_step},
              {"seed", g.seed},
              {"allowed_tokens", g.allowed_tokens}};
}

GcgConfig gcg_from_json(const json& j) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "top_k" && key != "candidates_per_step" && key != "seed" &&
        key != "allowed_tokens")
      throw SchemaError("unknown gcg config key \"" + key + "\"");
  }
  GcgConfig g;
  g.top_k = j.value("top_k", g.top_k);
  g.candidates_per_step = j.value("candidates_per_step", g.candidates_per_step);
  g.seed = j.value("seed", g.seed);
  g.allowed_tokens = j.value("allowed_tokens", g.allowed_tokens);
  return g;
}

json config_to_json_object(const TrainerConfig& cfg) {
  return json{{"rounds", cfg.rounds},
              {"inner_steps", cfg.inner_steps},
              {"inner_batch", cfg.inner_batch},
              {"outer_steps", cfg.outer_steps},
              {"outer_batch", cfg.outer_batch},
              {"alpha", cfg.alpha},
              {"beta", cfg.beta},
              {"contamination_weight", cfg.contamination_weight},
              {"outer_learning_rate", cfg.outer_learning_rate},
              {"separator_length", cfg.separator_length},
              {"gcg", gcg_to_json(cfg.gcg)},
              {"seed", cfg.seed}};
}

}  // namespace

std::string trainer_config_to_json(const TrainerConfig& cfg) {
  return config_to_json_object(cfg).dump(2) + "\n";
}

TrainerConfig trainer_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("trainer config: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("trainer config must be a JSON object");
  static const char* known[] = {"rounds",     "inner_steps",          "inner_batch",
                                "outer_steps", "outer_batch",          "alpha",
                                "beta",        "contamination_weight", "outer_learning_rate",
                                "separator_length", "gcg",             "seed"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw SchemaError("unknown trainer config key \"" + key + "\"");
  }
  TrainerConfig cfg;
  try {
    cfg.rounds = j.value("rounds", cfg.rounds);
    cfg.inner_steps = j.value("inner_steps", cfg.inner_steps);
    cfg.inner_batch = j.value("inner_batch", cfg.inner_batch);
    cfg.outer_steps = j.value("outer_steps", cfg.outer_steps);
    cfg.outer_batch = j.value("outer_batch", cfg.outer_batch);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.contamination_weight = j.value("contamination_weight", cfg.contamination_weight);
    cfg.outer_learning_rate = j.value("outer_learning_rate", cfg.outer_learning_rate);
    cfg.separator_length = j.value("separator_length", cfg.separator_length);
    if (j.contains("gcg")) cfg.gcg = gcg_from_json(j.at("gcg"));
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("trainer config: ") + e.what());
  }
  return cfg;
}

MinimaxTrainer::MinimaxTrainer(const GenerativeModel& backend, TinyLm& detector,
                               DetectionInstructionTemplate instruction, SecretKey key,
                               TaskCorpus corpus, TrainerConfig cfg,
                               std::filesystem::path run_dir)
    : backend_(backend),
      detector_(detector),
      instruction_(std::move(instruction)),
      key_(std::move(key)),
      corpus_(std::move(corpus)),
      cfg_(cfg),
      run_dir_(std::move(run_dir)) {
  require(corpus_.tasks.size() >= 2, "corpus needs at least two tasks to hold one out");
  require(cfg_.rounds >= 0, "rounds must be non-negative");
  require(cfg_.inner_steps >= 0 && cfg_.outer_steps >= 0, "step counts must be non-negative");
  require(cfg_.inner_batch >= 1 && cfg_.outer_batch >= 1, "batch sizes must be positive");
  require(cfg_.separator_length >= 1, "separator_length must be positive");
  require(std::isfinite(cfg_.outer_learning_rate) && cfg_.outer_learning_rate > 0.0,
          "outer_learning_rate must be positive");
  require(std::isfinite(cfg_.alpha) && cfg_.alpha >= 0.0, "alpha must be finite and >= 0");
  require(std::isfinite(cfg_.beta) && cfg_.beta >= 0.0, "beta must be finite and >= 0");
  require(std::isfinite(cfg_.contamination_weight) && cfg_.contamination_weight >= 0.0,
          "contamination_weight must be finite and >= 0");
  require(cfg_.gcg.top_k > 0 && cfg_.gcg.candidates_per_step > 0,
          "gcg budgets must be positive");
  require(!key_.value.empty(), "key must not be empty");
  for (const auto& task : corpus_.tasks)
    if (task.desired_output.empty())
      throw InvalidArgumentError("trainer config: every task needs a desired output");
  rendered_ = instruction_.render(key_);
}

TokenObjective MinimaxTrainer::inner_objective(const std::vector<std::size_t>& target_indices,
                                               const Task& eval_task) const {
  const std::string tail = trailing(join({eval_task.instruction, eval_task.data}));
  std::vector<ObjectiveTerm> terms;
  terms.reserve(2 * target_indices.size());
  const double w = 1.0 / static_cast<double>(target_indices.size());
  for (std::size_t idx : target_indices) {
    const Task& t = corpus_.tasks[idx];
    terms.push_back({w,
                     &detector_,
                     {leading(join({rendered_, t.data})), SlotRange{0, cfg_.separator_length},
                      tail},
                     key_.value});
    terms.push_back({cfg_.alpha * w,
                     &backend_,
                     {leading(join({t.instruction, t.data})),
                      SlotRange{0, cfg_.separator_length}, tail},
                     eval_task.desired_output});
  }
  return TokenObjective(std::move(terms), cfg_.separator_length);
}

RoundRecord MinimaxTrainer::run_round(int round, std::vector<TokenId>& separator) {
  RoundRecord rec;
  rec.round = round;

  std::mt19937_64 pick(seed_mix(cfg_.seed, stream(round, kPickEvalTask, 0)));
  rec.eval_task_index =
      static_cast<std::size_t>(uniform_below(pick, corpus_.tasks.size()));
  const Task& eval_task = corpus_.tasks[rec.eval_task_index];
  for (std::size_t i = 0; i < corpus_.tasks.size(); ++i)
    if (i != rec.eval_task_index) rec.train_task_indices.push_back(i);

  std::vector<std::size_t> positions(cfg_.separator_length);
  std::iota(positions.begin(), positions.end(), std::size_t{0});

  for (int i = 0; i < cfg_.inner_steps; ++i) {
    std::mt19937_64 rng(seed_mix(cfg_.seed, stream(round, kInnerBatch, i)));
    std::vector<std::size_t> batch;
    for (std::size_t local : sample_without_replacement(
             rec.train_task_indices.size(), static_cast<std::size_t>(cfg_.inner_batch), rng))
      batch.push_back(rec.train_task_indices[local]);

    TokenObjective objective = inner_objective(batch, eval_task);
    GcgConfig step_cfg = cfg_.gcg;
    step_cfg.seed = seed_mix(cfg_.seed, stream(round, kInnerSearch, i));
    GcgStepResult step = gcg_step(objective, separator, positions, step_cfg);
    separator = step.tokens;
    rec.inner.push_back({i, std::move(batch), separator, step.value});
  }

  rec.separator_tokens = separator;
  rec.separator_text = detector_.tokenizer().decode(separator);
  rec.contaminated.reserve(rec.train_task_indices.size());
  for (std::size_t idx : rec.train_task_indices)
    rec.contaminated.push_back(
        contaminate(corpus_.tasks[idx], eval_task, rec.separator_text, "minimax"));

  const double wc = cfg_.contamination_weight;
  for (int j = 0; j < cfg_.outer_steps; ++j) {
    std::mt19937_64 crng(seed_mix(cfg_.seed, stream(round, kOuterContaminated, j)));
    std::vector<std::size_t> cidx = sample_without_replacement(
        rec.contaminated.size(), static_cast<std::size_t>(cfg_.outer_batch), crng);
    std::mt19937_64 krng(seed_mix(cfg_.seed, stream(round, kOuterClean, j)));
    std::vector<std::size_t> kidx;
    for (std::size_t local : sample_without_replacement(
             rec.train_task_indices.size(), static_cast<std::size_t>(cfg_.outer_batch), krng))
      kidx.push_back(rec.train_task_indices[local]);

    ParameterObjective objective;
    OuterRecord row;
    row.step = j;
    const double nc = static_cast<double>(cidx.size());
    for (std::size_t c : cidx) {
      const std::string prompt = join({rendered_, rec.contaminated[c].payload});
      row.contaminated_key_loss += detector_.sequence_loss(prompt, key_.value) / nc;
      objective.terms.push_back({-wc / nc, prompt, key_.value});
    }
    const double nk = static_cast<double>(kidx.size());
    for (std::size_t idx : kidx) {
      const std::string prompt = join({rendered_, corpus_.tasks[idx].data});
      row.clean_key_loss += detector_.sequence_loss(prompt, key_.value) / nk;
      objective.terms.push_back({cfg_.beta / nk, prompt, key_.value});
    }
    row.contaminated_indices = std::move(cidx);
    row.clean_indices = std::move(kidx);
    rec.outer.push_back(std::move(row));

    detector_.apply_gradient_update(objective, cfg_.outer_learning_rate);
  }

  // Round boundary: pin the detector to its float32 image so a reloaded
  // checkpoint continues exactly like this process.
  if (run_dir_.empty()) {
    detector_.quantize_to_float32();
  } else {
    const auto dir = run_dir_ / "checkpoints" / ("round-" + std::to_string(round));
    std::filesystem::create_directories(dir);
    detector_.checkpoint(dir / "model.pclm");
  }
  return rec;
}

TrainingRunRecord MinimaxTrainer::run() {
  const auto& pool =
      cfg_.gcg.allowed_tokens.empty() ? detector_.tokenizer().text_ids() : cfg_.gcg.allowed_tokens;
  std::vector<TokenId> separator = random_token_init(
      cfg_.separator_length, pool, seed_mix(cfg_.seed, stream(0, kInitSeparator, 0)));

  TrainingRunRecord record;
  record.detector_model_id = detector_.model_id();
  for (int r = 1; r <= cfg_.rounds; ++r) {
    RoundRecord round = run_round(r, separator);
    if (!run_dir_.empty()) persist_round(round);
    record.rounds.push_back(std::move(round));
  }
  if (!run_dir_.empty()) persist_run(record);
  return record;
}

void MinimaxTrainer::persist_round(const RoundRecord& round) const {
  const auto dir = run_dir_ / "checkpoints" / ("round-" + std::to_string(round.round));
  std::filesystem::create_directories(dir);
  json j{{"round", round.round},
         {"eval_task_index", round.eval_task_index},
         {"train_task_indices", round.train_task_indices},
         {"separator_tokens", round.separator_tokens},
         {"separator_text", round.separator_text}};
  std::ofstream out(dir / "separator.json");
  out << j.dump(2) << "\n";
  if (!out) throw ParseError("cannot write " + (dir / "separator.json").string());
  const auto samples_dir = run_dir_ / "samples";
  std::filesystem::create_directories(samples_dir);
  save_samples(round.contaminated,
               samples_dir / ("round-" + std::to_string(round.round) + ".contaminated.jsonl"));
}

void MinimaxTrainer::persist_run(const TrainingRunRecord& record) const {
  std::filesystem::create_directories(run_dir_);

  json rounds = json::array();
  for (const auto& round : record.rounds) {
    json inner = json::array();
    for (const auto& rec : round.inner)
      inner.push_back({{"iteration", rec.iteration},
                       {"target_indices", rec.target_indices},
                       {"separator", rec.separator},
                       {"objective", rec.objective}});
    json outer = json::array();
    for (const auto& rec : round.outer)
      outer.push_back({{"step", rec.step},
                       {"contaminated_indices", rec.contaminated_indices},
                       {"clean_indices", rec.clean_indices},
                       {"contaminated_key_loss", rec.contaminated_key_loss},
                       {"clean_key_loss", rec.clean_key_loss}});
    rounds.push_back({{"round", round.round},
                      {"eval_task_index", round.eval_task_index},
                      {"train_task_indices", round.train_task_indices},
                      {"separator_tokens", round.separator_tokens},
                      {"separator_text", round.separator_text},
                      {"inner", std::move(inner)},
                      {"outer", std::move(outer)}});
  }
  json j{{"config", config_to_json_object(cfg_)},
         {"detector_model_id", record.detector_model_id},
         {"rounds", std::move(rounds)}};
  std::ofstream out(run_dir_ / "training_run.json");
  out << j.dump(2) << "\n";
  if (!out) throw ParseError("cannot write " + (run_dir_ / "training_run.json").string());

  // One CSV for both optimization phases; the inapplicable columns stay empty.
  std::ofstream csv(run_dir_ / "losses.csv");
  csv << "phase,round,step,objective,contaminated_key_loss,clean_key_loss\n";
  csv.precision(17);
  for (const auto& round : record.rounds) {
    for (const auto& rec : round.inner)
      csv << "inner," << round.round << "," << rec.iteration << "," << rec.objective << ",,\n";
    for (const auto& rec : round.outer)
      csv << "outer," << round.round << "," << rec.step << ",," << rec.contaminated_key_loss
          << "," << rec.clean_key_loss << "\n";
  }
  if (!csv) throw ParseError("cannot write " + (run_dir_ / "losses.csv").string());
}

}  // namespace canary
