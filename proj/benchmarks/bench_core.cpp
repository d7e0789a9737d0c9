// Hot-path benchmarks: model forward/loss/gradient kernels, the coordinate
// search step, and the end-to-end detection call. Run with --benchmark_filter
// to narrow; all models are deterministic, so numbers are comparable across
// runs on the same machine.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "promptcanary/detector.hpp"
#include "promptcanary/eval.hpp"
#include "promptcanary/gcg.hpp"
#include "promptcanary/rng.hpp"
#include "promptcanary/task.hpp"
#include "promptcanary/tiny_lm.hpp"

using namespace canary;

namespace {

TinyLm& model() {
  static TinyLm instance = [] {
    TinyLmConfig cfg;
    cfg.d_model = 32;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 64;
    cfg.max_seq = 256;
    cfg.init_seed = 17;
    return TinyLm(cfg);
  }();
  return instance;
}

std::vector<TokenId> tokens_of_length(std::size_t n) {
  std::mt19937_64 rng(n);
  const auto& pool = model().tokenizer().text_ids();
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = pool[uniform_below(rng, pool.size())];
  return ids;
}

void bm_next_token_logits(benchmark::State& state) {
  const auto tokens = tokens_of_length(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(model().next_token_logits(tokens));
  state.SetItemsProcessed(state.iterations());
}

void bm_sequence_loss(benchmark::State& state) {
  const auto prompt = model().tokenizer().decode(
      tokens_of_length(static_cast<std::size_t>(state.range(0))));
  const std::string continuation = "ABCDEFG";
  for (auto _ : state) benchmark::DoNotOptimize(model().sequence_loss(prompt, continuation));
  state.SetItemsProcessed(state.iterations());
}

void bm_token_gradients(benchmark::State& state) {
  const auto tokens = tokens_of_length(static_cast<std::size_t>(state.range(0)));
  std::vector<std::size_t> positions;
  for (std::size_t p = 0; p < 8; ++p) positions.push_back(p);
  const ScoredSpan span{tokens.size() - 8, tokens.size()};
  for (auto _ : state)
    benchmark::DoNotOptimize(model().token_gradients(tokens, positions, span));
  state.SetItemsProcessed(state.iterations());
}

void bm_parameter_update(benchmark::State& state) {
  TinyLm local = model();
  const auto prompt = local.tokenizer().decode(
      tokens_of_length(static_cast<std::size_t>(state.range(0))));
  ParameterObjective objective;
  objective.terms.push_back({1.0, prompt, "ABCDEFG"});
  for (auto _ : state) local.apply_gradient_update(objective, 1e-6);
  state.SetItemsProcessed(state.iterations());
}

void bm_gcg_step(benchmark::State& state) {
  std::vector<ObjectiveTerm> terms;
  terms.push_back({1.0, &model(),
                   {std::string("say the key: "), SlotRange{0, 8}, std::string(" tail words")},
                   "ABCDEFG"});
  TokenObjective objective(std::move(terms), 8);
  GcgConfig cfg;
  cfg.top_k = 8;
  cfg.candidates_per_step = static_cast<int>(state.range(0));
  cfg.seed = 5;
  std::vector<std::size_t> positions{0, 1, 2, 3, 4, 5, 6, 7};
  auto tokens = random_token_init(8, objective.tokenizer().text_ids(), 7);
  for (auto _ : state) {
    GcgStepResult step = gcg_step(objective, tokens, positions, cfg);
    benchmark::DoNotOptimize(step);
  }
  state.SetItemsProcessed(state.iterations());
}

void bm_detect(benchmark::State& state) {
  DetectorProfile profile;
  profile.model = &model();
  profile.key = generate_secret_key(3);
  const std::string data = model().tokenizer().decode(
      tokens_of_length(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(detect(profile, data));
  state.SetItemsProcessed(state.iterations());
}

BENCHMARK(bm_next_token_logits)->Arg(32)->Arg(128);
BENCHMARK(bm_sequence_loss)->Arg(32)->Arg(128);
BENCHMARK(bm_token_gradients)->Arg(32)->Arg(128);
BENCHMARK(bm_parameter_update)->Arg(32)->Arg(128);
BENCHMARK(bm_gcg_step)->Arg(8)->Arg(32);
BENCHMARK(bm_detect)->Arg(16)->Arg(96);

}  // namespace

BENCHMARK_MAIN();
