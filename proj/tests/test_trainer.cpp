#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "promptcanary/errors.hpp"
#include "promptcanary/text.hpp"
#include "promptcanary/tiny_lm.hpp"
#include "promptcanary/trainer.hpp"

using namespace canary;

namespace {

const std::string kAlphabet = "abcdosyXY :";

TinyLmConfig tiny_config(std::uint64_t seed) {
  TinyLmConfig cfg;
  cfg.alphabet = kAlphabet;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 24;
  cfg.max_seq = 64;
  cfg.init_seed = seed;
  return cfg;
}

TaskCorpus corpus3() {
  return {{{"do a:", "abc", "c", "copy"},
           {"do b:", "cab", "b", "copy"},
           {"do c:", "bca", "a", "copy"}},
          "toy"};
}

TrainerConfig small_config() {
  TrainerConfig cfg;
  cfg.rounds = 1;
  cfg.inner_steps = 2;
  cfg.inner_batch = 2;
  cfg.outer_steps = 3;
  cfg.outer_batch = 2;
  cfg.outer_learning_rate = 1e-3;
  cfg.separator_length = 3;
  cfg.gcg.top_k = 3;
  cfg.gcg.candidates_per_step = 6;
  cfg.seed = 5;
  return cfg;
}

SecretKey test_key() { return {"XYX", "XY", 3}; }

DetectionInstructionTemplate test_template() {
  return DetectionInstructionTemplate("say [KEY]:");
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "promptcanary-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<double> flat_params(const TinyLm& m) {
  std::vector<double> flat;
  for_each_param_block(m.params(), [&](const std::string&, const auto& block) {
    flat.insert(flat.end(), block.data(), block.data() + block.size());
  });
  return flat;
}

bool params_equal(const TinyLm& a, const TinyLm& b) { return flat_params(a) == flat_params(b); }

}  // namespace

TEST_CASE("one round produces a structurally sound record") {
  TinyLm f(tiny_config(1)), g(tiny_config(2));
  MinimaxTrainer trainer(f, g, test_template(), test_key(), corpus3(), small_config());
  auto record = trainer.run();

  REQUIRE(record.rounds.size() == 1);
  const auto& round = record.rounds[0];
  CHECK(round.round == 1);
  CHECK(round.eval_task_index < 3);
  REQUIRE(round.train_task_indices.size() == 2);
  for (std::size_t idx : round.train_task_indices) CHECK(idx != round.eval_task_index);
  CHECK(std::is_sorted(round.train_task_indices.begin(), round.train_task_indices.end()));

  REQUIRE(round.inner.size() == 2);
  for (const auto& rec : round.inner) {
    CHECK(rec.target_indices.size() == 2);
    for (std::size_t idx : rec.target_indices)
      CHECK(std::count(round.train_task_indices.begin(), round.train_task_indices.end(), idx) ==
            1);
    CHECK(rec.separator.size() == 3);
    CHECK(std::isfinite(rec.objective));
  }
  CHECK(round.separator_tokens == round.inner.back().separator);
  CHECK(round.separator_text.size() == 3);

  const auto corpus = corpus3();
  const Task& eval_task = corpus.tasks[round.eval_task_index];
  REQUIRE(round.contaminated.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& sample = round.contaminated[i];
    const Task& target = corpus.tasks[round.train_task_indices[i]];
    CHECK(sample.payload == join({target.data, round.separator_text, eval_task.instruction,
                                  eval_task.data}));
    CHECK(sample.attack_id == "minimax");
    CHECK(sample.label == "contaminated");
    CHECK(sample.injected == eval_task);
  }

  REQUIRE(round.outer.size() == 3);
  for (const auto& rec : round.outer) {
    CHECK(rec.contaminated_indices.size() == 2);
    CHECK(rec.clean_indices.size() == 2);
    CHECK(std::isfinite(rec.contaminated_key_loss));
    CHECK(std::isfinite(rec.clean_key_loss));
  }
}

TEST_CASE("inner records replay exactly against the round's starting detector") {
  TinyLm f(tiny_config(1)), g(tiny_config(2));
  const TinyLm g0 = g;  // the state every round-1 inner loss was computed at
  auto cfg = small_config();
  MinimaxTrainer trainer(f, g, test_template(), test_key(), corpus3(), cfg);
  auto record = trainer.run();

  const auto corpus = corpus3();
  const auto& round = record.rounds[0];
  const Task& eval_task = corpus.tasks[round.eval_task_index];
  const std::string rendered = test_template().render(test_key());
  const std::string tail = " " + join({eval_task.instruction, eval_task.data});

  for (const auto& rec : round.inner) {
    std::vector<ObjectiveTerm> terms;
    const double w = 1.0 / static_cast<double>(rec.target_indices.size());
    for (std::size_t idx : rec.target_indices) {
      const Task& t = corpus.tasks[idx];
      terms.push_back({w,
                       &g0,
                       {join({rendered, t.data}) + " ", SlotRange{0, 3}, tail},
                       test_key().value});
      terms.push_back({cfg.alpha * w,
                       &f,
                       {join({t.instruction, t.data}) + " ", SlotRange{0, 3}, tail},
                       eval_task.desired_output});
    }
    TokenObjective objective(std::move(terms), 3);
    CHECK(objective.value(rec.separator) == doctest::Approx(rec.objective).epsilon(1e-12));
  }
}

TEST_CASE("first outer record measures key losses against the pre-update detector") {
  TinyLm f(tiny_config(1)), g(tiny_config(2));
  const TinyLm g0 = g;
  MinimaxTrainer trainer(f, g, test_template(), test_key(), corpus3(), small_config());
  auto record = trainer.run();

  const auto corpus = corpus3();
  const auto& round = record.rounds[0];
  const auto& rec = round.outer[0];
  const std::string rendered = test_template().render(test_key());

  double j1 = 0.0;
  for (std::size_t c : rec.contaminated_indices)
    j1 += g0.sequence_loss(join({rendered, round.contaminated[c].payload}), test_key().value) /
          static_cast<double>(rec.contaminated_indices.size());
  double j2 = 0.0;
  for (std::size_t idx : rec.clean_indices)
    j2 += g0.sequence_loss(join({rendered, corpus.tasks[idx].data}), test_key().value) /
          static_cast<double>(rec.clean_indices.size());
  CHECK(rec.contaminated_key_loss == doctest::Approx(j1).epsilon(1e-12));
  CHECK(rec.clean_key_loss == doctest::Approx(j2).epsilon(1e-12));
}

TEST_CASE("a short run is a bit-exact prefix of a longer one") {
  auto dir1 = fresh_dir("prefix-short");
  auto dir3 = fresh_dir("prefix-long");
  auto cfg = small_config();

  TinyLm f(tiny_config(1));
  TinyLm g_short(tiny_config(2)), g_long(tiny_config(2));
  REQUIRE(params_equal(g_short, g_long));

  cfg.rounds = 1;
  auto rec_short =
      MinimaxTrainer(f, g_short, test_template(), test_key(), corpus3(), cfg, dir1).run();
  cfg.rounds = 3;
  auto rec_long =
      MinimaxTrainer(f, g_long, test_template(), test_key(), corpus3(), cfg, dir3).run();

  REQUIRE(rec_short.rounds.size() == 1);
  REQUIRE(rec_long.rounds.size() == 3);
  CHECK(rec_short.rounds[0] == rec_long.rounds[0]);
  CHECK(slurp(dir1 / "checkpoints/round-1/model.pclm") ==
        slurp(dir3 / "checkpoints/round-1/model.pclm"));
  CHECK(slurp(dir1 / "checkpoints/round-1/separator.json") ==
        slurp(dir3 / "checkpoints/round-1/separator.json"));

  // later rounds actually continue training against an updated detector
  CHECK(rec_long.rounds[1].inner != rec_long.rounds[0].inner);
}

TEST_CASE("zero rounds leaves the detector untouched") {
  TinyLm f(tiny_config(1)), g(tiny_config(2));
  const TinyLm g0 = g;
  auto cfg = small_config();
  cfg.rounds = 0;
  auto record = MinimaxTrainer(f, g, test_template(), test_key(), corpus3(), cfg).run();
  CHECK(record.rounds.empty());
  CHECK(params_equal(g, g0));
}

TEST_CASE("zero-weight objectives leave only the boundary quantization") {
  TinyLm f(tiny_config(1)), g(tiny_config(2));
  TinyLm quantized = g;
  quantized.quantize_to_float32();

  auto cfg = small_config();
  cfg.contamination_weight = 0.0;
  cfg.beta = 0.0;
  MinimaxTrainer(f, g, test_template(), test_key(), corpus3(), cfg).run();
  CHECK(params_equal(g, quantized));
}

TEST_CASE("training run artifacts land in the run directory") {
  auto dir = fresh_dir("artifacts");
  TinyLm f(tiny_config(1)), g(tiny_config(2));
  auto record = MinimaxTrainer(f, g, test_template(), test_key(), corpus3(), small_config(), dir)
                    .run();

  CHECK(std::filesystem::exists(dir / "training_run.json"));
  CHECK(std::filesystem::exists(dir / "checkpoints/round-1/separator.json"));

  auto reloaded = TinyLm::load(dir / "checkpoints/round-1/model.pclm");
  CHECK(params_equal(reloaded, g));

  auto samples = load_samples(dir / "samples/round-1.contaminated.jsonl");
  CHECK(samples == record.rounds[0].contaminated);

  std::ifstream csv(dir / "losses.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "phase,round,step,objective,contaminated_key_loss,clean_key_loss");
  int inner_rows = 0;
  int outer_rows = 0;
  for (std::string line; std::getline(csv, line);) {
    inner_rows += line.starts_with("inner,");
    outer_rows += line.starts_with("outer,");
  }
  CHECK(inner_rows == 2);
  CHECK(outer_rows == 3);
}

TEST_CASE("trainer config survives a JSON round trip and rejects unknown keys") {
  TrainerConfig cfg;
  cfg.rounds = 2;
  cfg.inner_steps = 7;
  cfg.inner_batch = 3;
  cfg.outer_steps = 11;
  cfg.outer_batch = 4;
  cfg.alpha = 0.5;
  cfg.beta = 2.0;
  cfg.contamination_weight = 0.25;
  cfg.outer_learning_rate = 3e-4;
  cfg.separator_length = 6;
  cfg.gcg.top_k = 5;
  cfg.gcg.candidates_per_step = 9;
  cfg.gcg.seed = 77;
  cfg.seed = 99;

  auto back = trainer_config_from_json(trainer_config_to_json(cfg));
  CHECK(back.rounds == cfg.rounds);
  CHECK(back.inner_steps == cfg.inner_steps);
  CHECK(back.inner_batch == cfg.inner_batch);
  CHECK(back.outer_steps == cfg.outer_steps);
  CHECK(back.outer_batch == cfg.outer_batch);
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.beta == cfg.beta);
  CHECK(back.contamination_weight == cfg.contamination_weight);
  CHECK(back.outer_learning_rate == cfg.outer_learning_rate);
  CHECK(back.separator_length == cfg.separator_length);
  CHECK(back.gcg.top_k == cfg.gcg.top_k);
  CHECK(back.gcg.candidates_per_step == cfg.gcg.candidates_per_step);
  CHECK(back.gcg.seed == cfg.gcg.seed);
  CHECK(back.seed == cfg.seed);

  CHECK(trainer_config_from_json("{}").rounds == TrainerConfig{}.rounds);
  CHECK_THROWS_AS(trainer_config_from_json("{\"rouns\": 2}"), SchemaError);
  CHECK_THROWS_AS(trainer_config_from_json("{\"gcg\": {\"topk\": 1}}"), SchemaError);
  CHECK_THROWS_AS(trainer_config_from_json("not json"), ParseError);
  CHECK_THROWS_AS(trainer_config_from_json("{\"rounds\": \"three\"}"), SchemaError);
}

TEST_CASE("trainer rejects unusable configurations") {
  TinyLm f(tiny_config(1)), g(tiny_config(2));
  auto cfg = small_config();

  TaskCorpus one{{{"do a:", "abc", "c", "copy"}}, "one"};
  CHECK_THROWS_AS(MinimaxTrainer(f, g, test_template(), test_key(), one, cfg),
                  InvalidArgumentError);

  auto blank = corpus3();
  blank.tasks[1].desired_output = "";
  CHECK_THROWS_AS(MinimaxTrainer(f, g, test_template(), test_key(), blank, cfg),
                  InvalidArgumentError);

  auto bad = cfg;
  bad.outer_learning_rate = 0.0;
  CHECK_THROWS_AS(MinimaxTrainer(f, g, test_template(), test_key(), corpus3(), bad),
                  InvalidArgumentError);
  bad = cfg;
  bad.inner_batch = 0;
  CHECK_THROWS_AS(MinimaxTrainer(f, g, test_template(), test_key(), corpus3(), bad),
                  InvalidArgumentError);
  bad = cfg;
  bad.separator_length = 0;
  CHECK_THROWS_AS(MinimaxTrainer(f, g, test_template(), test_key(), corpus3(), bad),
                  InvalidArgumentError);
  bad = cfg;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(MinimaxTrainer(f, g, test_template(), test_key(), corpus3(), bad),
                  InvalidArgumentError);
  bad = cfg;
  bad.rounds = -1;
  CHECK_THROWS_AS(MinimaxTrainer(f, g, test_template(), test_key(), corpus3(), bad),
                  InvalidArgumentError);

  SecretKey empty_key{"", "XY", 0};
  CHECK_THROWS_AS(MinimaxTrainer(f, g, test_template(), empty_key, corpus3(), cfg),
                  InvalidArgumentError);
}
