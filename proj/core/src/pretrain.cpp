#include "promptcanary/pretrain.hpp"

#include <cmath>
#include <random>

#include "promptcanary/attacks.hpp"
#include "promptcanary/detector.hpp"
#include "promptcanary/errors.hpp"
#include "promptcanary/eval.hpp"
#include "promptcanary/rng.hpp"
#include "promptcanary/text.hpp"

namespace canary {

namespace {

struct AdamState {
  std::vector<Eigen::ArrayXd> m, v;
  long t = 0;
};

AdamState make_adam_state(const TinyLmParams& params) {
  AdamState s;
  for_each_param_block(const_cast<TinyLmParams&>(params), [&](const std::string&, auto& block) {
    s.m.emplace_back(Eigen::ArrayXd::Zero(block.size()));
    s.v.emplace_back(Eigen::ArrayXd::Zero(block.size()));
  });
  return s;
}

void adam_step(TinyLmParams& params, const TinyLmParams& grads, AdamState& s,
               const PretrainConfig& cfg) {
  ++s.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, s.t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, s.t);
  std::vector<const double*> g;
  for_each_param_block(const_cast<TinyLmParams&>(grads),
                       [&](const std::string&, auto& block) { g.push_back(block.data()); });
  std::size_t bi = 0;
  for_each_param_block(params, [&](const std::string&, auto& block) {
    double* p = block.data();
    auto& m = s.m[bi];
    auto& v = s.v[bi];
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      const double gi = g[bi][i];
      m(i) = cfg.beta1 * m(i) + (1.0 - cfg.beta1) * gi;
      v(i) = cfg.beta2 * v(i) + (1.0 - cfg.beta2) * gi * gi;
      p[i] -= cfg.learning_rate * (m(i) / bc1) / (std::sqrt(v(i) / bc2) + cfg.adam_eps);
    }
    ++bi;
  });
}

}  // namespace

PretrainStats pretrain(TinyLm& model, const std::vector<PretrainExample>& examples,
                       const PretrainConfig& cfg) {
  if (examples.empty()) throw InvalidArgumentError("no pretraining examples");
  if (cfg.steps < 0 || cfg.batch_size <= 0)
    throw InvalidArgumentError("bad pretraining schedule");

  const auto& tok = model.tokenizer();
  struct Prepared {
    std::vector<TokenId> tokens;
    ScoredSpan span;
    double inv_len;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(examples.size());
  for (const auto& ex : examples) {
    if (ex.target.empty()) throw InvalidArgumentError("pretraining target is empty");
    Prepared p;
    p.tokens = tok.encode(ex.prompt);
    const std::size_t pl = p.tokens.size();
    auto t = tok.encode(ex.target);
    p.tokens.insert(p.tokens.end(), t.begin(), t.end());
    p.tokens.push_back(tok.eos());
    p.span = {pl, p.tokens.size()};
    p.inv_len = 1.0 / static_cast<double>(p.span.end - p.span.begin);
    prepared.push_back(std::move(p));
  }

  std::mt19937_64 rng(cfg.seed);
  AdamState adam = make_adam_state(model.params());
  PretrainStats stats;
  stats.losses.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<TokenLossTerm> terms;
    terms.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& p = prepared[uniform_below(rng, prepared.size())];
      terms.push_back({p.inv_len / cfg.batch_size, p.tokens, p.span});
    }
    double batch_loss = 0.0;
    TinyLmParams grads = model.parameter_gradients(terms, &batch_loss);
    for_each_param_block(grads, [](const std::string& name, auto& block) {
      if (!block.allFinite()) throw NonFiniteError("non-finite gradient in block " + name);
    });
    adam_step(model.params(), grads, adam, cfg);
    stats.losses.push_back(batch_loss);
  }
  return stats;
}

std::vector<PretrainExample> task_examples(const TaskCorpus& corpus) {
  std::vector<PretrainExample> out;
  out.reserve(corpus.tasks.size());
  for (const auto& t : corpus.tasks)
    out.push_back({join({t.instruction, t.data}), t.desired_output});
  return out;
}

std::vector<PretrainExample> echo_examples(const DetectionInstructionTemplate& tmpl,
                                           const std::vector<std::string>& distractors,
                                           int n_examples, std::uint64_t seed, int key_length,
                                           const std::string& key_alphabet) {
  if (distractors.empty()) throw InvalidArgumentError("no distractor texts");
  if (n_examples <= 0) throw InvalidArgumentError("n_examples must be positive");
  std::mt19937_64 rng(seed);
  std::vector<PretrainExample> out;
  out.reserve(static_cast<std::size_t>(n_examples));
  for (int i = 0; i < n_examples; ++i) {
    const SecretKey key = generate_secret_key(rng(), key_length, key_alphabet);
    const auto& text = distractors[uniform_below(rng, distractors.size())];
    out.push_back({join({tmpl.render(key), text}), key.value});
  }
  return out;
}

std::vector<std::string> echo_distractors(const TaskCorpus& corpus, std::size_t per_attack,
                                          std::uint64_t seed) {
  if (corpus.tasks.empty()) throw InvalidArgumentError("corpus is empty");
  std::vector<std::string> out;
  for (const auto& t : corpus.tasks) out.push_back(t.data);
  if (per_attack == 0 || corpus.tasks.size() < 2) return out;

  const std::size_t n = corpus.tasks.size();
  auto ids = heuristic_attack_ids();
  ids.push_back("availability");
  for (std::size_t a = 0; a < ids.size(); ++a) {
    const auto grid = build_grid(n, n, per_attack, seed_mix(seed, a));
    for (const auto& [ti, ei] : grid) {
      const Task& target = corpus.tasks[ti];
      if (ids[a] == "availability") {
        out.push_back(availability_attack(target).payload);
      } else {
        out.push_back(heuristic_attack(target, corpus.tasks[ei], ids[a]).payload);
      }
    }
  }
  return out;
}

}  // namespace canary
