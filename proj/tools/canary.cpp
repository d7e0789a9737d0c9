// canary: command-line front end for the detection toolkit. Subcommands cover
// the whole lifecycle: key generation, corpus synthesis, base-model
// pretraining, attack corpus generation, adversarial fine-tuning, detection,
// evaluation, serving, and report rendering.
//
// Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "promptcanary/attacks.hpp"
#include "promptcanary/detector.hpp"
#include "promptcanary/errors.hpp"
#include "promptcanary/eval.hpp"
#include "promptcanary/pretrain.hpp"
#include "promptcanary/rng.hpp"
#include "promptcanary/run_io.hpp"
#include "promptcanary/service.hpp"
#include "promptcanary/task.hpp"
#include "promptcanary/text.hpp"
#include "promptcanary/tiny_lm.hpp"
#include "promptcanary/trainer.hpp"

#include <CLI11.hpp>

namespace {

using namespace canary;

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ModelShapeOpts {
  std::string alphabet;  // empty keeps the tokenizer default
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 64;
  int max_seq = 256;  // combined-attack payloads behind the standard template need this
  std::uint64_t init_seed = 1;
};

void add_model_shape(CLI::App& cmd, ModelShapeOpts& opts) {
  cmd.add_option("--alphabet", opts.alphabet, "Model alphabet (default: built-in printable set)");
  cmd.add_option("--d-model", opts.d_model, "Embedding width")->check(CLI::PositiveNumber);
  cmd.add_option("--layers", opts.n_layers, "Transformer layers")->check(CLI::PositiveNumber);
  cmd.add_option("--heads", opts.n_heads, "Attention heads")->check(CLI::PositiveNumber);
  cmd.add_option("--d-ff", opts.d_ff, "Feed-forward width")->check(CLI::PositiveNumber);
  cmd.add_option("--max-seq", opts.max_seq, "Context length")->check(CLI::PositiveNumber);
  cmd.add_option("--init-seed", opts.init_seed, "Parameter init seed");
}

TinyLmConfig to_model_config(const ModelShapeOpts& opts) {
  TinyLmConfig cfg;
  cfg.alphabet = opts.alphabet;
  cfg.d_model = opts.d_model;
  cfg.n_layers = opts.n_layers;
  cfg.n_heads = opts.n_heads;
  cfg.d_ff = opts.d_ff;
  cfg.max_seq = opts.max_seq;
  cfg.init_seed = opts.init_seed;
  return cfg;
}

struct PretrainOpts {
  int steps = 4000;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

void add_pretrain_opts(CLI::App& cmd, PretrainOpts& opts) {
  cmd.add_option("--steps", opts.steps, "Optimization steps")->check(CLI::NonNegativeNumber);
  cmd.add_option("--batch", opts.batch, "Batch size")->check(CLI::PositiveNumber);
  cmd.add_option("--lr", opts.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  cmd.add_option("--train-seed", opts.seed, "Batch sampling seed");
}

DetectorProfile make_profile(const GenerativeModel& model, const SecretKey& key,
                             const std::string& template_text, int max_tokens,
                             double temperature, std::uint64_t gen_seed) {
  DetectorProfile profile;
  profile.model = &model;
  profile.key = key;
  profile.instruction = DetectionInstructionTemplate(template_text);
  profile.generation = {.max_tokens = max_tokens, .temperature = temperature, .seed = gen_seed};
  return profile;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> lines;
  if (path == "-") {
    for (std::string line; std::getline(std::cin, line);) lines.push_back(line);
    return lines;
  }
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

// --- subcommand bodies -----------------------------------------------------

int run_keygen(const std::string& out, int length, const std::string& alphabet,
               std::optional<std::uint64_t> seed) {
  const SecretKey key =
      seed ? generate_secret_key(*seed, length, alphabet) : generate_secret_key_random(length, alphabet);
  write_key_manifest(key, out);
  std::cout << "wrote " << out << " (fingerprint " << key_fingerprint(key) << ")\n";
  return 0;
}

int run_traingen(const std::string& out, std::size_t count, std::uint64_t seed,
                 const std::string& corpus_id, const std::string& eval_out,
                 std::size_t eval_count) {
  if (eval_out.empty()) {
    save_corpus(generate_synthetic_corpus(count, seed, corpus_id), out);
    std::cout << "wrote " << out << " (" << count << " tasks)\n";
    return 0;
  }
  const auto split = generate_synthetic_split(count, eval_count, seed);
  save_corpus(split.train, out);
  save_corpus(split.eval, eval_out);
  std::cout << "wrote " << out << " (" << count << " tasks) and " << eval_out << " ("
            << eval_count << " tasks)\n";
  return 0;
}

int run_pretrain_task(const std::string& corpus_path, const std::string& out,
                      const ModelShapeOpts& shape, const PretrainOpts& train) {
  const TaskCorpus corpus = load_corpus(corpus_path);
  TinyLm model(to_model_config(shape));
  PretrainConfig cfg;
  cfg.steps = train.steps;
  cfg.batch_size = train.batch;
  cfg.learning_rate = train.lr;
  cfg.seed = train.seed;
  const auto stats = pretrain(model, task_examples(corpus), cfg);
  model.save(out);
  std::cout << "wrote " << out;
  if (!stats.losses.empty())
    std::cout << " (loss " << stats.losses.front() << " -> " << stats.losses.back() << ")";
  std::cout << "\n";
  return 0;
}

int run_pretrain_echo(const std::string& corpus_path, const std::string& out,
                      const std::string& template_text, int key_length,
                      const std::string& key_alphabet, int examples, std::size_t per_attack,
                      std::uint64_t example_seed, const ModelShapeOpts& shape,
                      const PretrainOpts& train) {
  const TaskCorpus corpus = load_corpus(corpus_path);
  const DetectionInstructionTemplate tmpl(template_text);
  const auto distractors = echo_distractors(corpus, per_attack, example_seed);
  const auto batch =
      echo_examples(tmpl, distractors, examples, example_seed, key_length, key_alphabet);
  TinyLm model(to_model_config(shape));
  PretrainConfig cfg;
  cfg.steps = train.steps;
  cfg.batch_size = train.batch;
  cfg.learning_rate = train.lr;
  cfg.seed = train.seed;
  const auto stats = pretrain(model, batch, cfg);
  model.save(out);
  std::cout << "wrote " << out;
  if (!stats.losses.empty())
    std::cout << " (loss " << stats.losses.front() << " -> " << stats.losses.back() << ")";
  std::cout << "\n";
  return 0;
}

int run_attack(const std::string& corpus_path, const std::string& out,
               std::vector<std::string> attack_ids, const std::string& catalog_name,
               std::size_t budget, std::uint64_t seed, bool include_clean) {
  if (catalog_name != "primary" && catalog_name != "alternate")
    throw SchemaError("unknown catalog \"" + catalog_name + "\"");
  const TaskCorpus corpus = load_corpus(corpus_path);
  const auto catalog =
      catalog_name == "alternate" ? SeparatorCatalog::kAlternate : SeparatorCatalog::kPrimary;
  if (attack_ids.empty()) attack_ids = heuristic_attack_ids();

  std::vector<ContaminatedSample> samples;
  if (include_clean)
    for (const auto& task : corpus.tasks) samples.push_back(clean_sample(task));

  const std::size_t n = corpus.tasks.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t e = 0; e < n; ++e)
      if (t != e) pairs.emplace_back(t, e);
  if (budget > 0 && budget < pairs.size()) {
    std::mt19937_64 rng(seed_mix(seed, 0x9a9a));
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    for (auto idx : sample_without_replacement(pairs.size(), budget, rng))
      chosen.push_back(pairs[idx]);
    pairs = std::move(chosen);
  }

  for (const auto& id : attack_ids) {
    if (id == "availability") {
      for (const auto& task : corpus.tasks) samples.push_back(availability_attack(task));
      continue;
    }
    for (const auto& [t, e] : pairs)
      samples.push_back(heuristic_attack(corpus.tasks[t], corpus.tasks[e], id, catalog));
  }
  save_samples(samples, out);
  std::cout << "wrote " << out << " (" << samples.size() << " samples)\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& key_override,
              std::optional<int> rounds_override, std::optional<std::uint64_t> seed_override,
              std::optional<std::string> output_override) {
  RunConfig cfg = load_run_config(config_path);
  if (rounds_override) cfg.trainer.rounds = *rounds_override;
  if (seed_override) {
    cfg.seed = *seed_override;
    cfg.trainer.seed = *seed_override;
  }
  if (output_override) cfg.output_dir = *output_override;
  if (cfg.output_dir.empty()) throw SchemaError("run config needs an output_dir");
  if (cfg.corpus_path.empty()) throw SchemaError("run config needs a corpus_path");

  const auto run_dir = ensure_run_dir(cfg.output_dir);
  save_run_config(cfg, run_dir / "config.json");

  // Key precedence: explicit manifest, then one already in the run dir, then
  // a fresh key derived from the run seed.
  const auto key_path = run_dir / "key.manifest";
  SecretKey key;
  if (!key_override.empty()) {
    key = read_key_manifest(key_override);
    if (std::filesystem::weakly_canonical(key_override) !=
        std::filesystem::weakly_canonical(key_path))
      write_key_manifest(key, key_path);
  } else if (std::filesystem::exists(key_path)) {
    key = read_key_manifest(key_path);
  } else {
    key = generate_secret_key(seed_mix(cfg.seed, 0x6b65));
    write_key_manifest(key, key_path);
  }

  auto backend = load_model(cfg.backend);
  if (cfg.detector.kind != "tiny")
    throw SchemaError("training needs a tiny detector model, got \"" + cfg.detector.kind + "\"");
  if (cfg.detector.checkpoint.empty())
    throw SchemaError("tiny model spec needs a checkpoint path");
  TinyLm detector = TinyLm::load(cfg.detector.checkpoint);
  const TaskCorpus corpus = load_corpus(cfg.corpus_path);

  MinimaxTrainer trainer(*backend, detector, DetectionInstructionTemplate(cfg.instruction_template),
                         key, corpus, cfg.trainer, run_dir);
  const auto record = trainer.run();
  detector.checkpoint(run_dir / "checkpoints" / "final.pclm");
  std::cout << "finished " << record.rounds.size() << " rounds; final checkpoint "
            << (run_dir / "checkpoints" / "final.pclm").string() << "\n";
  return 0;
}

int run_detect(const std::string& model_path, const std::string& key_path,
               const std::string& template_text, const std::string& input_path,
               const std::string& samples_path, int max_tokens, double temperature,
               std::uint64_t gen_seed, bool show_output) {
  if (input_path.empty() == samples_path.empty())
    throw InvalidArgumentError("pass exactly one of --input or --samples");
  const TinyLm model = TinyLm::load(model_path);
  const SecretKey key = read_key_manifest(key_path);
  const auto profile =
      make_profile(model, key, template_text, max_tokens, temperature, gen_seed);

  std::vector<std::string> items;
  if (!input_path.empty()) {
    items = read_lines(input_path);
  } else {
    for (const auto& sample : load_samples(samples_path)) items.push_back(sample.payload);
  }
  for (const auto& item : items) {
    const auto result = detect(profile, item);
    std::cout << to_string(result.verdict);
    if (show_output) std::cout << "\t" << redact_key(key, result.raw_output);
    std::cout << "\n";
  }
  return 0;
}

int run_evaluate(const std::string& config_path, const std::string& samples_path,
                 const std::string& key_path_override, bool no_utility, int workers,
                 int max_tokens, double temperature, std::uint64_t gen_seed) {
  const RunConfig cfg = load_run_config(config_path);
  if (cfg.output_dir.empty()) throw SchemaError("run config needs an output_dir");
  const auto run_dir = ensure_run_dir(cfg.output_dir);
  const auto key_path =
      key_path_override.empty() ? (run_dir / "key.manifest").string() : key_path_override;
  const SecretKey key = read_key_manifest(key_path);

  auto detector = load_model(cfg.detector);
  const auto profile =
      make_profile(*detector, key, cfg.instruction_template, max_tokens, temperature, gen_seed);

  const auto all = load_samples(samples_path);
  std::vector<ContaminatedSample> clean;
  std::vector<ContaminatedSample> contaminated;
  for (const auto& sample : all)
    (sample.label == "clean" ? clean : contaminated).push_back(sample);

  MetricsReport report;
  report.counts["samples_clean"] = clean.size();
  report.counts["samples_contaminated"] = contaminated.size();
  report.metadata["detector_model"] = detector->model_id();
  report.metadata["key_fingerprint"] = key_fingerprint(key);
  report.metadata["samples_path"] = samples_path;

  DetectionCounts fpr_counts;
  if (!clean.empty()) {
    report.fpr = compute_fpr(profile, clean, &fpr_counts, workers);
    report.counts["clean_flagged"] = fpr_counts.flagged;
  }
  if (!contaminated.empty()) {
    const auto fnr = compute_fnr(profile, contaminated, workers);
    report.fnr = fnr.fnr;
    report.counts["contaminated_passed"] = fnr.passed;
  }
  if (!no_utility && !contaminated.empty()) {
    auto backend = load_model(cfg.backend);
    report.metadata["backend_model"] = backend->model_id();
    const GenerationConfig backend_gen{.max_tokens = max_tokens, .temperature = 0.0,
                                       .seed = gen_seed};
    UtilityCounts pna, asv;
    report.pna_i = compute_pna_i(*backend, contaminated, backend_gen, {}, &pna, workers);
    report.asv = compute_asv(*backend, contaminated, backend_gen, {}, {}, &asv, workers);
    report.counts["utility_excluded"] = pna.excluded + asv.excluded;
  }

  save_metrics(report, run_dir / "metrics.json");
  save_markdown(report, run_dir / "report.md");
  std::cout << metrics_to_json(report);
  return 0;
}

int run_serve(const std::string& model_path, const std::string& key_path,
              const std::string& template_text, const std::string& bind, int port,
              const std::string& auth_token_env, int max_tokens, double temperature,
              std::uint64_t gen_seed) {
  const TinyLm model = TinyLm::load(model_path);
  const SecretKey key = read_key_manifest(key_path);
  const auto profile =
      make_profile(model, key, template_text, max_tokens, temperature, gen_seed);

  ServiceConfig cfg;
  cfg.bind_address = bind;
  cfg.port = port;
  if (!auth_token_env.empty()) {
    const char* token = std::getenv(auth_token_env.c_str());
    if (token == nullptr || *token == '\0')
      throw InvalidArgumentError("environment variable " + auth_token_env + " is not set");
    cfg.auth_token = token;
  }
  DetectService service(profile, cfg);
  std::cout << "serving " << model.model_id() << " on " << bind << ":" << port << "\n"
            << std::flush;
  service.run();
  return 0;
}

int run_report(const std::string& run_dir) {
  const auto metrics = load_metrics(std::filesystem::path(run_dir) / "metrics.json");
  const auto markdown = metrics_to_markdown(metrics);
  std::ofstream out(std::filesystem::path(run_dir) / "report.md");
  out << markdown;
  if (!out) throw ParseError("cannot write " + (std::filesystem::path(run_dir) / "report.md").string());
  std::cout << markdown;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Game-theoretic prompt-injection detection toolkit"};
  app.require_subcommand(1);
  int exit_code = 0;

  // keygen
  auto* keygen = app.add_subcommand("keygen", "Generate a secret key manifest");
  std::string kg_out;
  int kg_length = kDefaultKeyLength;
  std::string kg_alphabet = kDefaultKeyAlphabet;
  std::optional<std::uint64_t> kg_seed;
  keygen->add_option("--out", kg_out, "Manifest path")->required();
  keygen->add_option("--length", kg_length, "Key length")->check(CLI::PositiveNumber);
  keygen->add_option("--key-alphabet", kg_alphabet, "Key alphabet");
  keygen->add_option("--seed", kg_seed, "Deterministic seed (default: OS entropy)");
  keygen->callback([&] { exit_code = run_keygen(kg_out, kg_length, kg_alphabet, kg_seed); });

  // traingen
  auto* traingen = app.add_subcommand("traingen", "Generate a synthetic task corpus");
  std::string tg_out, tg_eval_out, tg_corpus_id = "synthetic";
  std::size_t tg_count = 64, tg_eval_count = 16;
  std::uint64_t tg_seed = 0;
  traingen->add_option("--out", tg_out, "Corpus path (jsonl)")->required();
  traingen->add_option("--count", tg_count, "Task count")->check(CLI::PositiveNumber);
  traingen->add_option("--seed", tg_seed, "Generator seed");
  traingen->add_option("--corpus-id", tg_corpus_id, "Corpus label");
  traingen->add_option("--eval-out", tg_eval_out, "Also write a disjoint eval corpus here");
  traingen->add_option("--eval-count", tg_eval_count, "Eval task count")
      ->check(CLI::PositiveNumber);
  traingen->callback([&] {
    exit_code = run_traingen(tg_out, tg_count, tg_seed, tg_corpus_id, tg_eval_out, tg_eval_count);
  });

  // pretrain
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Train a TinyLm base model from scratch");
  std::string pt_corpus, pt_out, pt_mode = "task";
  std::string pt_template = DetectionInstructionTemplate::standard().text();
  int pt_key_length = kDefaultKeyLength;
  std::string pt_key_alphabet = kDefaultKeyAlphabet;
  int pt_examples = 2000;
  std::size_t pt_per_attack = 8;
  std::uint64_t pt_example_seed = 0;
  ModelShapeOpts pt_shape;
  PretrainOpts pt_train;
  pretrain_cmd->add_option("--corpus", pt_corpus, "Task corpus (jsonl)")->required();
  pretrain_cmd->add_option("--out", pt_out, "Checkpoint path")->required();
  pretrain_cmd->add_option("--mode", pt_mode, "task: learn the corpus; echo: learn key echoing")
      ->check(CLI::IsMember({"task", "echo"}));
  pretrain_cmd->add_option("--template", pt_template, "Detection instruction (echo mode)");
  pretrain_cmd->add_option("--key-length", pt_key_length, "Key length (echo mode)")
      ->check(CLI::PositiveNumber);
  pretrain_cmd->add_option("--key-alphabet", pt_key_alphabet, "Key alphabet (echo mode)");
  pretrain_cmd->add_option("--examples", pt_examples, "Echo examples (echo mode)")
      ->check(CLI::PositiveNumber);
  pretrain_cmd->add_option("--per-attack", pt_per_attack,
                           "Attack-shaped distractors per attack (echo mode)");
  pretrain_cmd->add_option("--example-seed", pt_example_seed, "Example sampling seed");
  add_model_shape(*pretrain_cmd, pt_shape);
  add_pretrain_opts(*pretrain_cmd, pt_train);
  pretrain_cmd->callback([&] {
    exit_code = pt_mode == "task"
                    ? run_pretrain_task(pt_corpus, pt_out, pt_shape, pt_train)
                    : run_pretrain_echo(pt_corpus, pt_out, pt_template, pt_key_length,
                                        pt_key_alphabet, pt_examples, pt_per_attack,
                                        pt_example_seed, pt_shape, pt_train);
  });

  // attack
  auto* attack = app.add_subcommand("attack", "Contaminate a corpus with catalog attacks");
  std::string at_corpus, at_out, at_catalog = "primary";
  std::vector<std::string> at_ids;
  std::size_t at_budget = 0;
  std::uint64_t at_seed = 0;
  bool at_include_clean = false;
  attack->add_option("--corpus", at_corpus, "Task corpus (jsonl)")->required();
  attack->add_option("--out", at_out, "Sample output path (jsonl)")->required();
  attack->add_option("--attacks", at_ids,
                     "Attack ids (default: all heuristics); availability also accepted")
      ->delimiter(',');
  attack->add_option("--catalog", at_catalog, "Separator catalog: primary or alternate");
  attack->add_option("--budget", at_budget, "Max task pairs per attack (0: all)");
  attack->add_option("--seed", at_seed, "Pair sampling seed");
  attack->add_flag("--include-clean", at_include_clean, "Also emit clean samples");
  attack->callback([&] {
    exit_code =
        run_attack(at_corpus, at_out, at_ids, at_catalog, at_budget, at_seed, at_include_clean);
  });

  // train
  auto* train = app.add_subcommand("train", "Adversarially fine-tune a detection model");
  std::string tr_config, tr_key;
  std::optional<int> tr_rounds;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::string> tr_output;
  train->add_option("--config", tr_config, "Run config (json)")->required();
  train->add_option("--key", tr_key, "Existing key manifest (copied into the run dir)");
  train->add_option("--rounds", tr_rounds, "Override trainer rounds");
  train->add_option("--seed", tr_seed, "Override run seed");
  train->add_option("--output-dir", tr_output, "Override output directory");
  train->callback(
      [&] { exit_code = run_train(tr_config, tr_key, tr_rounds, tr_seed, tr_output); });

  // detect
  auto* detect_cmd = app.add_subcommand("detect", "Classify data items");
  std::string dt_model, dt_key, dt_input, dt_samples;
  std::string dt_template = DetectionInstructionTemplate::standard().text();
  int dt_max_tokens = 32;
  double dt_temperature = 0.0;
  std::uint64_t dt_gen_seed = 0;
  bool dt_show_output = false;
  detect_cmd->add_option("--model", dt_model, "Detector checkpoint (.pclm)")->required();
  detect_cmd->add_option("--key", dt_key, "Key manifest")->required();
  detect_cmd->add_option("--template", dt_template, "Detection instruction template");
  detect_cmd->add_option("--input", dt_input, "Text file, one data item per line (- for stdin)");
  detect_cmd->add_option("--samples", dt_samples, "Contaminated-sample jsonl file");
  detect_cmd->add_option("--max-tokens", dt_max_tokens, "Generation budget")
      ->check(CLI::PositiveNumber);
  detect_cmd->add_option("--temperature", dt_temperature, "Generation temperature")
      ->check(CLI::NonNegativeNumber);
  detect_cmd->add_option("--gen-seed", dt_gen_seed, "Generation seed");
  detect_cmd->add_flag("--show-output", dt_show_output, "Append the redacted model output");
  detect_cmd->callback([&] {
    exit_code = run_detect(dt_model, dt_key, dt_template, dt_input, dt_samples, dt_max_tokens,
                           dt_temperature, dt_gen_seed, dt_show_output);
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Compute detection and utility metrics");
  std::string ev_config, ev_samples, ev_key;
  bool ev_no_utility = false;
  int ev_workers = 1;
  int ev_max_tokens = 32;
  double ev_temperature = 0.0;
  std::uint64_t ev_gen_seed = 0;
  evaluate->add_option("--config", ev_config, "Run config (json)")->required();
  evaluate->add_option("--samples", ev_samples, "Sample jsonl (clean + contaminated)")
      ->required();
  evaluate->add_option("--key", ev_key, "Key manifest (default: output_dir/key.manifest)");
  evaluate->add_flag("--no-utility", ev_no_utility, "Skip backend PNA-I/ASV metrics");
  evaluate->add_option("--workers", ev_workers, "Worker threads (0: hardware)")
      ->check(CLI::NonNegativeNumber);
  evaluate->add_option("--max-tokens", ev_max_tokens, "Generation budget")
      ->check(CLI::PositiveNumber);
  evaluate->add_option("--temperature", ev_temperature, "Detector temperature")
      ->check(CLI::NonNegativeNumber);
  evaluate->add_option("--gen-seed", ev_gen_seed, "Generation seed");
  evaluate->callback([&] {
    exit_code = run_evaluate(ev_config, ev_samples, ev_key, ev_no_utility, ev_workers,
                             ev_max_tokens, ev_temperature, ev_gen_seed);
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Run the detection HTTP service");
  std::string sv_model, sv_key, sv_bind = "127.0.0.1", sv_auth_env;
  std::string sv_template = DetectionInstructionTemplate::standard().text();
  int sv_port = 8787;
  int sv_max_tokens = 32;
  double sv_temperature = 0.0;
  std::uint64_t sv_gen_seed = 0;
  serve->add_option("--model", sv_model, "Detector checkpoint (.pclm)")->required();
  serve->add_option("--key", sv_key, "Key manifest")->required();
  serve->add_option("--template", sv_template, "Detection instruction template");
  serve->add_option("--bind", sv_bind, "Bind address");
  serve->add_option("--port", sv_port, "Port")->check(CLI::PositiveNumber);
  serve->add_option("--auth-token-env", sv_auth_env,
                    "Env var holding the required bearer token");
  serve->add_option("--max-tokens", sv_max_tokens, "Generation budget")
      ->check(CLI::PositiveNumber);
  serve->add_option("--temperature", sv_temperature, "Generation temperature")
      ->check(CLI::NonNegativeNumber);
  serve->add_option("--gen-seed", sv_gen_seed, "Generation seed");
  serve->callback([&] {
    exit_code = run_serve(sv_model, sv_key, sv_template, sv_bind, sv_port, sv_auth_env,
                          sv_max_tokens, sv_temperature, sv_gen_seed);
  });

  // report
  auto* report = app.add_subcommand("report", "Render metrics.json as markdown");
  std::string rp_dir;
  report->add_option("--run-dir", rp_dir, "Run directory with metrics.json")->required();
  report->callback([&] { exit_code = run_report(rp_dir); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const ParseError& e) {  // SchemaError included
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgumentError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return exit_code;
}
