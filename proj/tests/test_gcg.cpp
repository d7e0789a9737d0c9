#include <doctest.h>

#include <fstream>
#include <set>

#include "promptcanary/errors.hpp"
#include "promptcanary/gcg.hpp"
#include "promptcanary/tiny_lm.hpp"

using namespace canary;

namespace {

TinyLmConfig tiny_config(const std::string& alphabet, std::uint64_t seed) {
  TinyLmConfig cfg;
  cfg.alphabet = alphabet;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 24;
  cfg.max_seq = 64;
  cfg.init_seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("objective value decomposes into weighted sequence losses") {
  TinyLm model(tiny_config("abcde ", 1));
  const auto& tok = model.tokenizer();
  std::vector<TokenId> slot = random_token_init(4, tok.text_ids(), 2);

  ObjectiveTerm t1{2.0, &model, {std::string("ab "), SlotRange{0, 4}, std::string(" c")}, "de"};
  ObjectiveTerm t2{0.5, &model, {SlotRange{1, 3}}, "a"};
  TokenObjective objective({t1, t2}, 4);

  const std::string slot_text = tok.decode(slot);
  const double expect1 = model.sequence_loss("ab " + slot_text + " c", "de");
  const double expect2 = model.sequence_loss(tok.decode({slot[1], slot[2]}), "a");
  CHECK(objective.value(slot) == doctest::Approx(2.0 * expect1 + 0.5 * expect2).epsilon(1e-12));
}

TEST_CASE("slot gradients match the models' token gradients") {
  TinyLm model(tiny_config("abcde ", 3));
  const auto& tok = model.tokenizer();
  std::vector<TokenId> slot = random_token_init(3, tok.text_ids(), 4);

  ObjectiveTerm term{1.5, &model, {std::string("ad"), SlotRange{0, 3}}, "bc"};
  TokenObjective objective({term}, 3);
  TokenGradients got = objective.slot_gradients(slot);

  auto stream = tok.encode("ad");
  std::vector<std::size_t> positions{stream.size(), stream.size() + 1, stream.size() + 2};
  stream.insert(stream.end(), slot.begin(), slot.end());
  auto cont = tok.encode("bc");
  const std::size_t pl = stream.size();
  stream.insert(stream.end(), cont.begin(), cont.end());
  TokenGradients expected = model.token_gradients(stream, positions, {pl, stream.size()});
  CHECK(((got - 1.5 * expected).cwiseAbs().maxCoeff()) <= 1e-12);
}

TEST_CASE("terms over different tokenizers are rejected") {
  TinyLm a(tiny_config("abc ", 1));
  TinyLm b(tiny_config("xyz ", 1));
  ObjectiveTerm t1{1.0, &a, {SlotRange{0, 2}}, "a"};
  ObjectiveTerm t2{1.0, &b, {SlotRange{0, 2}}, "x"};
  CHECK_THROWS_AS(TokenObjective({t1, t2}, 2), InvalidArgumentError);
}

TEST_CASE("random token init is deterministic, uniform over the pool, and checked") {
  std::vector<TokenId> pool{5, 9, 11};
  auto a = random_token_init(16, pool, 7);
  CHECK(a == random_token_init(16, pool, 7));
  CHECK(a != random_token_init(16, pool, 8));
  std::set<TokenId> seen(a.begin(), a.end());
  for (TokenId id : seen) CHECK(std::count(pool.begin(), pool.end(), id) == 1);

  CHECK(random_token_init(4, {42}, 0) == std::vector<TokenId>{42, 42, 42, 42});
  CHECK_THROWS_AS(random_token_init(0, pool, 0), InvalidArgumentError);
  CHECK_THROWS_AS(random_token_init(4, {}, 0), InvalidArgumentError);
}

TEST_CASE("a coordinate step changes at most one mutable position") {
  TinyLm model(tiny_config("abcdef ", 5));
  const auto& tok = model.tokenizer();
  std::vector<TokenId> slot = random_token_init(6, tok.text_ids(), 6);
  ObjectiveTerm term{1.0, &model, {std::string("fa "), SlotRange{0, 6}}, "ed"};
  TokenObjective objective({term}, 6);

  std::vector<std::size_t> mutable_positions{1, 3, 4};
  GcgConfig cfg{.top_k = 4, .candidates_per_step = 8, .seed = 3};
  auto step = gcg_step(objective, slot, mutable_positions, cfg);

  int changed = 0;
  for (std::size_t i = 0; i < slot.size(); ++i) {
    if (step.tokens[i] != slot[i]) {
      ++changed;
      CHECK(std::count(mutable_positions.begin(), mutable_positions.end(), i) == 1);
    }
  }
  CHECK(changed <= 1);
  CHECK(step.value <= objective.value(slot));
  CHECK(step.value == objective.value(step.tokens));
}

TEST_CASE("a run's trace never increases and starts at the initial value") {
  TinyLm model(tiny_config("abcdef ", 8));
  const auto& tok = model.tokenizer();
  std::vector<TokenId> slot = random_token_init(5, tok.text_ids(), 9);
  ObjectiveTerm term{1.0, &model, {std::string("b"), SlotRange{0, 5}, std::string("c")}, "fad"};
  TokenObjective objective({term}, 5);

  std::vector<std::size_t> all{0, 1, 2, 3, 4};
  GcgConfig cfg{.top_k = 6, .candidates_per_step = 10, .seed = 4};
  auto run = gcg_run(objective, slot, all, 20, cfg);

  REQUIRE(run.trace.size() == 21);
  CHECK(run.trace.front() == objective.value(slot));
  for (std::size_t i = 1; i < run.trace.size(); ++i)
    CHECK(run.trace[i] <= run.trace[i - 1]);
  CHECK(run.trace.back() == objective.value(run.tokens));

  auto zero = gcg_run(objective, slot, all, 0, cfg);
  CHECK(zero.tokens == slot);
  CHECK(zero.trace.size() == 1);
}

TEST_CASE("with an exhaustive budget one step equals the brute-force argmin") {
  // single mutable position, tiny alphabet, top_k covering the whole vocab:
  // every substitution is evaluated, so the step must match brute force
  TinyLm model(tiny_config("abcde", 11));
  const auto& tok = model.tokenizer();
  REQUIRE(tok.text_ids().size() == 5);

  std::vector<TokenId> slot = random_token_init(3, tok.text_ids(), 12);
  ObjectiveTerm term{1.0, &model, {std::string("c"), SlotRange{0, 3}}, "ab"};
  TokenObjective objective({term}, 3);

  GcgConfig cfg{.top_k = 5, .candidates_per_step = 64, .seed = 1};
  auto step = gcg_step(objective, slot, {1}, cfg);

  double best = objective.value(slot);
  for (TokenId v : tok.text_ids()) {
    auto trial = slot;
    trial[1] = v;
    best = std::min(best, objective.value(trial));
  }
  CHECK(step.value == best);
}

TEST_CASE("no mutable positions leaves the slot untouched") {
  TinyLm model(tiny_config("ab ", 2));
  std::vector<TokenId> slot = random_token_init(2, model.tokenizer().text_ids(), 1);
  ObjectiveTerm term{1.0, &model, {SlotRange{0, 2}}, "a"};
  TokenObjective objective({term}, 2);
  auto step = gcg_step(objective, slot, {}, {});
  CHECK(step.tokens == slot);
  CHECK(step.value == objective.value(slot));
}

TEST_CASE("loss traces serialize as step,value lines") {
  const auto path = std::filesystem::temp_directory_path() / "promptcanary-tests" / "trace.csv";
  std::filesystem::create_directories(path.parent_path());
  write_loss_trace({3.5, 2.25, 2.25}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,value");
  std::getline(in, line);
  CHECK(line == "0,3.5");
  std::getline(in, line);
  CHECK(line == "1,2.25");
}
