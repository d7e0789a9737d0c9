#include <doctest.h>

#include <random>
#include <string>

#include "promptcanary/detector.hpp"
#include "promptcanary/errors.hpp"
#include "promptcanary/eval.hpp"
#include "promptcanary/pretrain.hpp"
#include "promptcanary/rng.hpp"
#include "promptcanary/text.hpp"

using namespace canary;

namespace {

TinyLmConfig learner_config(const std::string& alphabet, std::uint64_t seed) {
  TinyLmConfig cfg;
  cfg.alphabet = alphabet;
  cfg.d_model = 24;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 48;
  cfg.max_seq = 64;
  cfg.init_seed = seed;
  return cfg;
}

std::vector<std::string> random_texts(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::string letters = "abcdefghijklmnoprstuvwyz";
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string s;
    const std::size_t len = 4 + uniform_below(rng, 9);
    for (std::size_t i = 0; i < len; ++i) {
      if (i > 0 && i + 1 < len && s.back() != ' ' && uniform_below(rng, 5) == 0)
        s.push_back(' ');
      else
        s.push_back(letters[uniform_below(rng, letters.size())]);
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("echo examples render the key into the instruction and cycle distractors") {
  DetectionInstructionTemplate tmpl("say [KEY]:");
  std::vector<std::string> distractors{"one", "two"};
  auto examples = echo_examples(tmpl, distractors, 6, 3, 3, "AB");
  REQUIRE(examples.size() == 6);
  for (const auto& ex : examples) {
    CHECK(ex.target.size() == 3);
    for (char c : ex.target) CHECK((c == 'A' || c == 'B'));
    CHECK(ex.prompt.substr(0, 4) == "say ");
    CHECK(ex.prompt.find(ex.target) != std::string::npos);
    const bool one = ex.prompt.ends_with(" one");
    CHECK((one || ex.prompt.ends_with(" two")));
    CHECK(ex.prompt == join({tmpl.render({ex.target, "AB", 3}), one ? "one" : "two"}));
  }
  CHECK(echo_examples(tmpl, distractors, 6, 3, 3, "AB") == examples);

  CHECK_THROWS_AS(echo_examples(tmpl, {}, 6, 3), InvalidArgumentError);
  CHECK_THROWS_AS(echo_examples(tmpl, distractors, 0, 3), InvalidArgumentError);
}

TEST_CASE("task examples pair joined prompts with desired outputs") {
  TaskCorpus corpus{{{"copy the text:", "ab", "ab", "copy"},
                    {"reverse the text:", "cd", "dc", "reverse"}},
                    "toy"};
  auto examples = task_examples(corpus);
  REQUIRE(examples.size() == 2);
  CHECK(examples[0].prompt == "copy the text: ab");
  CHECK(examples[0].target == "ab");
  CHECK(examples[1].prompt == "reverse the text: cd");
  CHECK(examples[1].target == "dc");
}

TEST_CASE("echo distractors cover clean data and every attack shape") {
  auto corpus = generate_synthetic_corpus(4, 7);
  auto texts = echo_distractors(corpus, 2, 11);

  // 4 clean items, then 2 payloads for each of the 5 heuristic attacks plus
  // the availability attack.
  REQUIRE(texts.size() == 4 + 6 * 2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(texts[i] == corpus.tasks[i].data);
  int with_separator_cue = 0;
  for (std::size_t i = 4; i < texts.size(); ++i)
    with_separator_cue += texts[i].find(':') != std::string::npos;
  CHECK(with_separator_cue == 12);  // every payload carries an instruction

  CHECK(echo_distractors(corpus, 2, 11) == texts);
  CHECK(echo_distractors(corpus, 0, 11).size() == 4);
  CHECK_THROWS_AS(echo_distractors(TaskCorpus{}, 2, 11), InvalidArgumentError);
}

TEST_CASE("pretraining is deterministic and drives the loss down") {
  auto corpus = generate_synthetic_corpus(6, 11);
  auto examples = task_examples(corpus);
  TinyLm a(learner_config(CharTokenizer::default_alphabet(), 5));
  TinyLm b(learner_config(CharTokenizer::default_alphabet(), 5));

  PretrainConfig cfg;
  cfg.steps = 40;
  cfg.batch_size = 4;
  cfg.seed = 9;
  auto stats_a = pretrain(a, examples, cfg);
  auto stats_b = pretrain(b, examples, cfg);
  REQUIRE(stats_a.losses.size() == 40);
  CHECK(stats_a.losses == stats_b.losses);
  CHECK(stats_a.losses.back() < stats_a.losses.front());

  CHECK_THROWS_AS(pretrain(a, {}, cfg), InvalidArgumentError);
  auto bad = examples;
  bad[0].target = "";
  CHECK_THROWS_AS(pretrain(a, bad, cfg), InvalidArgumentError);
}

TEST_CASE("a small model learns to echo fresh keys past unseen distractors") {
  // Copying only emerges when memorizing is impossible: keys must be drawn from
  // the full alphabet (fresh per example) and the distractor pool must be too
  // diverse to fit by rote.
  DetectionInstructionTemplate tmpl("say [KEY]:");
  auto examples = echo_examples(tmpl, random_texts(200, 5), 1600, 17, 3, kDefaultKeyAlphabet);

  TinyLmConfig mc = learner_config(CharTokenizer::default_alphabet(), 21);
  mc.d_model = 32;
  mc.d_ff = 64;
  TinyLm model(mc);
  PretrainConfig cfg;
  cfg.steps = 6000;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-3;
  cfg.seed = 23;
  auto stats = pretrain(model, examples, cfg);
  REQUIRE(stats.losses.back() < 0.05);

  GenerationConfig gen;
  gen.max_tokens = 8;
  gen.temperature = 0.0;
  auto held_out = random_texts(6, 999);
  held_out.push_back("green door");
  int hits = 0;
  int total = 0;
  for (const auto& text : held_out)
    for (const std::string& kv : {std::string("QZK"), std::string("MRV"), std::string("HWT")}) {
      SecretKey key{kv, kDefaultKeyAlphabet, 3};
      const std::string out = model.generate(join({tmpl.render(key), text}), gen);
      ++total;
      if (out.find(kv) != std::string::npos) ++hits;
    }
  CHECK(hits == total);
}

TEST_CASE("a small model memorizes a tiny task corpus") {
  TaskCorpus corpus{{{"copy the text:", "fog", "fog", "copy"},
                    {"reverse the text:", "sun", "nus", "reverse"},
                    {"name the marker:", "aqqb", "qq", "classify"}},
                    "toy"};
  TinyLm model(learner_config(CharTokenizer::default_alphabet(), 31));
  PretrainConfig cfg;
  cfg.steps = 500;
  cfg.batch_size = 3;
  cfg.learning_rate = 2e-3;
  cfg.seed = 37;
  pretrain(model, task_examples(corpus), cfg);

  GenerationConfig gen;
  gen.max_tokens = 8;
  for (const auto& task : corpus.tasks)
    CHECK(model.generate(join({task.instruction, task.data}), gen) == task.desired_output);
}
