#include "promptcanary/tiny_lm.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "promptcanary/errors.hpp"

namespace canary {

namespace {

constexpr double kLnEps = 1e-5;
constexpr char kMagic[4] = {'P', 'C', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

double gelu(double u) { return 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0))); }

double gelu_grad(double u) {
  const double phi = std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
  const double Phi = 0.5 * (1.0 + std::erf(u / std::sqrt(2.0)));
  return Phi + u * phi;
}

void layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& b,
                Eigen::MatrixXd& out, Eigen::MatrixXd& xhat, Eigen::VectorXd& inv_std) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  out.resize(rows, cols);
  xhat.resize(rows, cols);
  inv_std.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().sum() / static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    inv_std(i) = inv;
    xhat.row(i) = ((x.row(i).array() - mean) * inv).matrix();
    out.row(i) = xhat.row(i).cwiseProduct(g.transpose()) + b.transpose();
  }
}

/// dx for the pre-norm input given dout; accumulates dg/db.
Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dout, const Eigen::MatrixXd& xhat,
                                    const Eigen::VectorXd& inv_std, const Eigen::VectorXd& g,
                                    Eigen::VectorXd& dg, Eigen::VectorXd& db) {
  const Eigen::Index rows = dout.rows(), cols = dout.cols();
  Eigen::MatrixXd dx(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::RowVectorXd dxhat = dout.row(i).cwiseProduct(g.transpose());
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
    dx.row(i) = (inv_std(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2)).matrix();
  }
  dg += dout.cwiseProduct(xhat).colwise().sum().transpose();
  db += dout.colwise().sum().transpose();
  return dx;
}

/// Cross-entropy over internal target positions [begin, end): the token at
/// internal position q is scored from logits row q-1. Optionally accumulates
/// the gradient w.r.t. logits.
double ce_loss(const Eigen::MatrixXd& logits, const std::vector<TokenId>& ids, std::size_t begin,
               std::size_t end, Eigen::MatrixXd* dlogits) {
  double loss = 0.0;
  for (std::size_t q = begin; q < end; ++q) {
    const auto r = static_cast<Eigen::Index>(q - 1);
    const auto row = logits.row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    loss += lse - row(ids[q]);
    if (dlogits) {
      dlogits->row(r) += (row.array() - lse).exp().matrix();
      (*dlogits)(r, ids[q]) -= 1.0;
    }
  }
  return loss;
}

/// dst += src, walking both parameter structs in canonical order.
void accumulate_blocks(TinyLmParams& dst, const TinyLmParams& src) {
  std::vector<double*> d;
  std::vector<std::size_t> n;
  for_each_param_block(dst, [&](const std::string&, auto& block) {
    d.push_back(block.data());
    n.push_back(static_cast<std::size_t>(block.size()));
  });
  std::vector<const double*> s;
  for_each_param_block(src, [&](const std::string&, auto& block) { s.push_back(block.data()); });
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < n[i]; ++j) d[i][j] += s[i][j];
}

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u32(std::ofstream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_u64(std::ofstream& out, std::uint64_t v) { write_bytes(out, &v, 8); }

void read_bytes(std::ifstream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw ParseError("truncated checkpoint");
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v;
  read_bytes(in, &v, 4);
  return v;
}

std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v;
  read_bytes(in, &v, 8);
  return v;
}

}  // namespace

struct TinyLm::Cache {
  struct Layer {
    Eigen::MatrixXd ln1_xhat;
    Eigen::VectorXd ln1_inv;
    Eigen::MatrixXd q, k, v;
    std::vector<Eigen::MatrixXd> probs;  // per head, T x T, zero above the diagonal
    Eigen::MatrixXd attn_concat;         // pre-Wo
    Eigen::MatrixXd ln2_xhat;
    Eigen::VectorXd ln2_inv;
    Eigen::MatrixXd u;      // pre-gelu
    Eigen::MatrixXd hgelu;  // post-gelu
  };
  Eigen::MatrixXd x0;
  std::vector<Layer> layers;
  Eigen::MatrixXd lnf_xhat;
  Eigen::VectorXd lnf_inv;
  Eigen::MatrixXd logits;
};

TinyLm::TinyLm(TinyLmConfig cfg)
    : cfg_(std::move(cfg)),
      tokenizer_(cfg_.alphabet.empty() ? CharTokenizer::default_alphabet() : cfg_.alphabet) {
  cfg_.alphabet = tokenizer_.alphabet();
  if (cfg_.d_model <= 0 || cfg_.n_layers <= 0 || cfg_.n_heads <= 0 || cfg_.d_ff <= 0 ||
      cfg_.max_seq <= 1)
    throw InvalidArgumentError("model dimensions must be positive");
  if (cfg_.d_model % cfg_.n_heads != 0)
    throw InvalidArgumentError("d_model must be divisible by n_heads");

  const int V = tokenizer_.vocab_size();
  const int D = cfg_.d_model;
  std::mt19937_64 rng(cfg_.init_seed);
  std::normal_distribution<double> dist(0.0, 0.02);
  auto randm = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
    return m;
  };

  params_.tok_emb = randm(V, D);
  params_.pos_emb = randm(cfg_.max_seq, D);
  params_.layers.resize(static_cast<std::size_t>(cfg_.n_layers));
  for (auto& lay : params_.layers) {
    lay.ln1_g = Eigen::VectorXd::Ones(D);
    lay.ln1_b = Eigen::VectorXd::Zero(D);
    lay.wq = randm(D, D);
    lay.wk = randm(D, D);
    lay.wv = randm(D, D);
    lay.wo = randm(D, D);
    lay.bq = Eigen::VectorXd::Zero(D);
    lay.bk = Eigen::VectorXd::Zero(D);
    lay.bv = Eigen::VectorXd::Zero(D);
    lay.bo = Eigen::VectorXd::Zero(D);
    lay.ln2_g = Eigen::VectorXd::Ones(D);
    lay.ln2_b = Eigen::VectorXd::Zero(D);
    lay.w1 = randm(D, cfg_.d_ff);
    lay.b1 = Eigen::VectorXd::Zero(cfg_.d_ff);
    lay.w2 = randm(cfg_.d_ff, D);
    lay.b2 = Eigen::VectorXd::Zero(D);
  }
  params_.lnf_g = Eigen::VectorXd::Ones(D);
  params_.lnf_b = Eigen::VectorXd::Zero(D);
  params_.head = randm(D, V);
  params_.head_b = Eigen::VectorXd::Zero(V);
  model_id_ = "tinylm-d" + std::to_string(D) + "l" + std::to_string(cfg_.n_layers);
}

std::vector<TokenId> TinyLm::internal_ids(std::span<const TokenId> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size() + 1);
  ids.push_back(tokenizer_.bos());
  ids.insert(ids.end(), tokens.begin(), tokens.end());
  if (static_cast<int>(ids.size()) > cfg_.max_seq)
    throw ContextOverflowError("sequence of " + std::to_string(ids.size()) +
                               " tokens exceeds context of " + std::to_string(cfg_.max_seq));
  for (TokenId id : ids)
    if (id < 0 || id >= tokenizer_.vocab_size())
      throw InvalidArgumentError("token id " + std::to_string(id) + " out of range");
  return ids;
}

void TinyLm::forward(const std::vector<TokenId>& ids, Cache& cache,
                     const Eigen::RowVectorXd* emb_offset, std::size_t offset_pos) const {
  const auto T = static_cast<Eigen::Index>(ids.size());
  const int D = cfg_.d_model;
  const int H = cfg_.n_heads;
  const int Dh = D / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(Dh));

  cache.x0.resize(T, D);
  for (Eigen::Index t = 0; t < T; ++t)
    cache.x0.row(t) =
        params_.tok_emb.row(ids[static_cast<std::size_t>(t)]) + params_.pos_emb.row(t);
  if (emb_offset) cache.x0.row(static_cast<Eigen::Index>(offset_pos)) += *emb_offset;

  Eigen::MatrixXd x = cache.x0;
  cache.layers.resize(params_.layers.size());
  for (std::size_t li = 0; li < params_.layers.size(); ++li) {
    const auto& lay = params_.layers[li];
    auto& lc = cache.layers[li];

    Eigen::MatrixXd a;
    layer_norm(x, lay.ln1_g, lay.ln1_b, a, lc.ln1_xhat, lc.ln1_inv);
    lc.q = a * lay.wq;
    lc.q.rowwise() += lay.bq.transpose();
    lc.k = a * lay.wk;
    lc.k.rowwise() += lay.bk.transpose();
    lc.v = a * lay.wv;
    lc.v.rowwise() += lay.bv.transpose();

    lc.probs.assign(static_cast<std::size_t>(H), Eigen::MatrixXd::Zero(T, T));
    lc.attn_concat.resize(T, D);
    for (int h = 0; h < H; ++h) {
      auto qh = lc.q.middleCols(h * Dh, Dh);
      auto kh = lc.k.middleCols(h * Dh, Dh);
      auto vh = lc.v.middleCols(h * Dh, Dh);
      Eigen::MatrixXd s = qh * kh.transpose() * scale;
      auto& p = lc.probs[static_cast<std::size_t>(h)];
      for (Eigen::Index i = 0; i < T; ++i) {
        auto row = s.row(i).head(i + 1);
        const double m = row.maxCoeff();
        Eigen::RowVectorXd e = (row.array() - m).exp();
        p.row(i).head(i + 1) = e / e.sum();
      }
      lc.attn_concat.middleCols(h * Dh, Dh) = p * vh;
    }
    Eigen::MatrixXd attn_out = lc.attn_concat * lay.wo;
    attn_out.rowwise() += lay.bo.transpose();
    x += attn_out;

    Eigen::MatrixXd b;
    layer_norm(x, lay.ln2_g, lay.ln2_b, b, lc.ln2_xhat, lc.ln2_inv);
    lc.u = b * lay.w1;
    lc.u.rowwise() += lay.b1.transpose();
    lc.hgelu = lc.u.unaryExpr([](double v) { return gelu(v); });
    Eigen::MatrixXd m = lc.hgelu * lay.w2;
    m.rowwise() += lay.b2.transpose();
    x += m;
  }

  Eigen::MatrixXd y;
  layer_norm(x, params_.lnf_g, params_.lnf_b, y, cache.lnf_xhat, cache.lnf_inv);
  cache.logits = y * params_.head;
  cache.logits.rowwise() += params_.head_b.transpose();
}

double TinyLm::backward(const std::vector<TokenId>& ids, ScoredSpan span, double weight,
                        TinyLmParams* grads, Eigen::MatrixXd* dx0) const {
  Cache cache;
  forward(ids, cache, nullptr, 0);

  const auto T = static_cast<Eigen::Index>(ids.size());
  const int D = cfg_.d_model;
  const int H = cfg_.n_heads;
  const int Dh = D / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(Dh));
  const int V = tokenizer_.vocab_size();

  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(T, V);
  const double loss = ce_loss(cache.logits, ids, span.begin, span.end, &dlogits);
  dlogits *= weight;

  TinyLmParams local = zero_gradients();

  Eigen::MatrixXd y(T, D);
  for (Eigen::Index i = 0; i < T; ++i)
    y.row(i) =
        cache.lnf_xhat.row(i).cwiseProduct(params_.lnf_g.transpose()) + params_.lnf_b.transpose();
  local.head = y.transpose() * dlogits;
  local.head_b = dlogits.colwise().sum().transpose();

  Eigen::MatrixXd dy = dlogits * params_.head.transpose();
  Eigen::MatrixXd dx =
      layer_norm_backward(dy, cache.lnf_xhat, cache.lnf_inv, params_.lnf_g, local.lnf_g,
                          local.lnf_b);

  // dx tracks the residual-stream gradient on the way down; each block adds
  // its pre-norm path on top of the identity path.
  for (int li = static_cast<int>(params_.layers.size()) - 1; li >= 0; --li) {
    const auto& lay = params_.layers[static_cast<std::size_t>(li)];
    const auto& lc = cache.layers[static_cast<std::size_t>(li)];
    auto& lg = local.layers[static_cast<std::size_t>(li)];

    // MLP block: x_out = x_mid + gelu(ln2(x_mid) W1 + b1) W2 + b2
    Eigen::MatrixXd b(T, D);
    for (Eigen::Index i = 0; i < T; ++i)
      b.row(i) = lc.ln2_xhat.row(i).cwiseProduct(lay.ln2_g.transpose()) + lay.ln2_b.transpose();

    const Eigen::MatrixXd dm = dx;
    lg.w2 += lc.hgelu.transpose() * dm;
    lg.b2 += dm.colwise().sum().transpose();
    Eigen::MatrixXd dh = dm * lay.w2.transpose();
    Eigen::MatrixXd du = dh.cwiseProduct(lc.u.unaryExpr([](double v) { return gelu_grad(v); }));
    lg.w1 += b.transpose() * du;
    lg.b1 += du.colwise().sum().transpose();
    Eigen::MatrixXd dln2_out = du * lay.w1.transpose();
    dx += layer_norm_backward(dln2_out, lc.ln2_xhat, lc.ln2_inv, lay.ln2_g, lg.ln2_g, lg.ln2_b);

    // attention block: x_mid = x_in + concat_h(P_h V_h) Wo + bo
    const Eigen::MatrixXd dattn_out = dx;
    lg.wo += lc.attn_concat.transpose() * dattn_out;
    lg.bo += dattn_out.colwise().sum().transpose();
    Eigen::MatrixXd dconcat = dattn_out * lay.wo.transpose();

    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(T, D);
    Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(T, D);
    Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(T, D);
    for (int h = 0; h < H; ++h) {
      const auto& p = lc.probs[static_cast<std::size_t>(h)];
      auto qh = lc.q.middleCols(h * Dh, Dh);
      auto kh = lc.k.middleCols(h * Dh, Dh);
      Eigen::MatrixXd doh = dconcat.middleCols(h * Dh, Dh);
      Eigen::MatrixXd dp = doh * lc.v.middleCols(h * Dh, Dh).transpose();
      dv.middleCols(h * Dh, Dh) = p.transpose() * doh;
      Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(T, T);
      for (Eigen::Index i = 0; i < T; ++i) {
        auto pi = p.row(i).head(i + 1);
        auto dpi = dp.row(i).head(i + 1);
        const double dot = dpi.cwiseProduct(pi).sum();
        ds.row(i).head(i + 1) = (pi.array() * (dpi.array() - dot)).matrix();
      }
      dq.middleCols(h * Dh, Dh) = ds * kh * scale;
      dk.middleCols(h * Dh, Dh) = ds.transpose() * qh * scale;
    }

    Eigen::MatrixXd a(T, D);
    for (Eigen::Index i = 0; i < T; ++i)
      a.row(i) = lc.ln1_xhat.row(i).cwiseProduct(lay.ln1_g.transpose()) + lay.ln1_b.transpose();

    lg.wq += a.transpose() * dq;
    lg.bq += dq.colwise().sum().transpose();
    lg.wk += a.transpose() * dk;
    lg.bk += dk.colwise().sum().transpose();
    lg.wv += a.transpose() * dv;
    lg.bv += dv.colwise().sum().transpose();
    Eigen::MatrixXd da =
        dq * lay.wq.transpose() + dk * lay.wk.transpose() + dv * lay.wv.transpose();
    dx += layer_norm_backward(da, lc.ln1_xhat, lc.ln1_inv, lay.ln1_g, lg.ln1_g, lg.ln1_b);
  }

  for (Eigen::Index t = 0; t < T; ++t) {
    local.tok_emb.row(ids[static_cast<std::size_t>(t)]) += dx.row(t);
    local.pos_emb.row(t) += dx.row(t);
  }

  if (grads) accumulate_blocks(*grads, local);
  if (dx0) *dx0 = dx;
  return weight * loss;
}

double TinyLm::token_span_loss(std::span<const TokenId> tokens, ScoredSpan span) const {
  validate_span(tokens, span);
  const auto ids = internal_ids(tokens);
  Cache cache;
  forward(ids, cache, nullptr, 0);
  return ce_loss(cache.logits, ids, span.begin + 1, span.end + 1, nullptr);
}

double TinyLm::sequence_loss(std::string_view prompt, std::string_view continuation) const {
  if (continuation.empty()) throw InvalidArgumentError("continuation is empty");
  auto tokens = tokenizer_.encode(prompt);
  const std::size_t pl = tokens.size();
  auto cont = tokenizer_.encode(continuation);
  tokens.insert(tokens.end(), cont.begin(), cont.end());
  return token_span_loss(tokens, {pl, tokens.size()});
}

double TinyLm::span_loss_with_embedding_offset(std::span<const TokenId> tokens, ScoredSpan span,
                                               std::size_t position,
                                               const Eigen::RowVectorXd& offset) const {
  validate_span(tokens, span);
  if (position >= tokens.size()) throw InvalidArgumentError("offset position out of range");
  if (offset.size() != cfg_.d_model) throw InvalidArgumentError("offset has wrong width");
  const auto ids = internal_ids(tokens);
  Cache cache;
  forward(ids, cache, &offset, position + 1);
  return ce_loss(cache.logits, ids, span.begin + 1, span.end + 1, nullptr);
}

Eigen::RowVectorXd TinyLm::next_token_logits(std::span<const TokenId> tokens) const {
  const auto ids = internal_ids(tokens);
  Cache cache;
  forward(ids, cache, nullptr, 0);
  return cache.logits.row(static_cast<Eigen::Index>(ids.size()) - 1);
}

TokenGradients TinyLm::token_gradients(std::span<const TokenId> tokens,
                                       std::span<const std::size_t> mutable_positions,
                                       ScoredSpan span) const {
  validate_span(tokens, span);
  for (std::size_t p : mutable_positions)
    if (p >= tokens.size())
      throw InvalidArgumentError("mutable position " + std::to_string(p) + " out of range");

  const int V = tokenizer_.vocab_size();
  TokenGradients out(static_cast<Eigen::Index>(mutable_positions.size()), V);
  if (mutable_positions.empty()) return out;

  const auto ids = internal_ids(tokens);
  Eigen::MatrixXd dx0;
  backward(ids, {span.begin + 1, span.end + 1}, 1.0, nullptr, &dx0);

  for (std::size_t i = 0; i < mutable_positions.size(); ++i) {
    const auto t = static_cast<Eigen::Index>(mutable_positions[i] + 1);
    out.row(static_cast<Eigen::Index>(i)) = (params_.tok_emb * dx0.row(t).transpose()).transpose();
  }
  return out;
}

TinyLmParams TinyLm::parameter_gradients(const std::vector<TokenLossTerm>& terms,
                                         double* objective_value) const {
  TinyLmParams grads = zero_gradients();
  double total = 0.0;
  for (const auto& term : terms) {
    validate_span(term.tokens, term.span);
    const auto ids = internal_ids(term.tokens);
    total += backward(ids, {term.span.begin + 1, term.span.end + 1}, term.weight, &grads, nullptr);
  }
  if (objective_value) *objective_value = total;
  return grads;
}

void TinyLm::apply_token_update(const std::vector<TokenLossTerm>& terms, double learning_rate) {
  TinyLmParams grads = parameter_gradients(terms);
  for_each_param_block(grads, [](const std::string& name, auto& block) {
    if (!block.allFinite()) throw NonFiniteError("non-finite gradient in block " + name);
  });

  std::vector<double*> dst;
  std::vector<std::size_t> len;
  for_each_param_block(params_, [&](const std::string&, auto& block) {
    dst.push_back(block.data());
    len.push_back(static_cast<std::size_t>(block.size()));
  });
  std::vector<const double*> src;
  for_each_param_block(grads,
                       [&](const std::string&, auto& block) { src.push_back(block.data()); });
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t j = 0; j < len[i]; ++j) dst[i][j] -= learning_rate * src[i][j];
}

void TinyLm::apply_gradient_update(const ParameterObjective& objective, double learning_rate) {
  std::vector<TokenLossTerm> terms;
  terms.reserve(objective.terms.size());
  for (const auto& t : objective.terms) {
    if (t.continuation.empty()) throw InvalidArgumentError("continuation is empty");
    TokenLossTerm tt;
    tt.weight = t.weight;
    tt.tokens = tokenizer_.encode(t.prompt);
    const std::size_t pl = tt.tokens.size();
    auto cont = tokenizer_.encode(t.continuation);
    tt.tokens.insert(tt.tokens.end(), cont.begin(), cont.end());
    tt.span = {pl, tt.tokens.size()};
    terms.push_back(std::move(tt));
  }
  apply_token_update(terms, learning_rate);
}

std::string TinyLm::generate(std::string_view prompt, const GenerationConfig& cfg) const {
  if (cfg.temperature < 0) throw InvalidArgumentError("temperature must be >= 0");
  if (cfg.max_tokens < 0) throw InvalidArgumentError("max_tokens must be >= 0");
  auto ids = internal_ids(tokenizer_.encode(prompt));
  std::mt19937_64 rng(cfg.seed);

  std::vector<TokenId> out;
  Cache cache;
  for (int n = 0; n < cfg.max_tokens; ++n) {
    if (static_cast<int>(ids.size()) >= cfg_.max_seq) break;
    forward(ids, cache, nullptr, 0);
    const auto row = cache.logits.row(static_cast<Eigen::Index>(ids.size()) - 1);
    TokenId next = 0;
    if (cfg.temperature == 0.0) {
      Eigen::Index arg;
      row.maxCoeff(&arg);
      next = static_cast<TokenId>(arg);
    } else {
      Eigen::RowVectorXd scaled = row / cfg.temperature;
      const double m = scaled.maxCoeff();
      Eigen::RowVectorXd probs = (scaled.array() - m).exp();
      probs /= probs.sum();
      const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
      double acc = 0.0;
      next = static_cast<TokenId>(probs.size() - 1);
      for (Eigen::Index i = 0; i < probs.size(); ++i) {
        acc += probs(i);
        if (u < acc) {
          next = static_cast<TokenId>(i);
          break;
        }
      }
    }
    if (next == tokenizer_.eos()) break;
    ids.push_back(next);
    out.push_back(next);
  }
  return tokenizer_.decode(out);
}

void TinyLm::validate_span(std::span<const TokenId> tokens, ScoredSpan span) const {
  if (span.begin >= span.end) throw InvalidArgumentError("scored span is empty");
  if (span.end > tokens.size()) throw InvalidArgumentError("scored span exceeds sequence");
}

TinyLmParams TinyLm::zero_gradients() const {
  TinyLmParams g = params_;
  for_each_param_block(g, [](const std::string&, auto& block) { block.setZero(); });
  return g;
}

void TinyLm::quantize_to_float32() {
  for_each_param_block(params_, [](const std::string&, auto& block) {
    double* d = block.data();
    for (Eigen::Index i = 0; i < block.size(); ++i)
      d[i] = static_cast<double>(static_cast<float>(d[i]));
  });
}

void TinyLm::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path.string());
  write_bytes(out, kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(tokenizer_.vocab_size()));
  write_u32(out, static_cast<std::uint32_t>(cfg_.d_model));
  write_u32(out, static_cast<std::uint32_t>(cfg_.n_layers));
  write_u32(out, static_cast<std::uint32_t>(cfg_.n_heads));
  write_u32(out, static_cast<std::uint32_t>(cfg_.d_ff));
  write_u32(out, static_cast<std::uint32_t>(cfg_.max_seq));
  write_u32(out, static_cast<std::uint32_t>(cfg_.alphabet.size()));
  write_bytes(out, cfg_.alphabet.data(), cfg_.alphabet.size());

  std::uint64_t count = 0;
  for_each_param_block(params_, [&](const std::string&, const auto& block) {
    count += static_cast<std::uint64_t>(block.size());
  });
  write_u64(out, count);
  for_each_param_block(params_, [&](const std::string&, const auto& block) {
    const double* d = block.data();
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      const float f = static_cast<float>(d[i]);
      write_bytes(out, &f, 4);
    }
  });
  if (!out) throw ParseError("write failed for " + path.string());
}

void TinyLm::checkpoint(const std::filesystem::path& path) {
  save(path);
  quantize_to_float32();
}

TinyLm TinyLm::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  char magic[4];
  read_bytes(in, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a model checkpoint: " + path.string());
  const auto version = read_u32(in);
  if (version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));

  const auto vocab = read_u32(in);
  TinyLmConfig cfg;
  cfg.d_model = static_cast<int>(read_u32(in));
  cfg.n_layers = static_cast<int>(read_u32(in));
  cfg.n_heads = static_cast<int>(read_u32(in));
  cfg.d_ff = static_cast<int>(read_u32(in));
  cfg.max_seq = static_cast<int>(read_u32(in));
  const auto alpha_len = read_u32(in);
  cfg.alphabet.resize(alpha_len);
  read_bytes(in, cfg.alphabet.data(), alpha_len);
  if (vocab != alpha_len + 3) throw ParseError("checkpoint vocab does not match its alphabet");

  TinyLm model(cfg);
  const auto expected = read_u64(in);
  std::uint64_t count = 0;
  for_each_param_block(model.params_, [&](const std::string&, auto& block) {
    double* d = block.data();
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      float f;
      read_bytes(in, &f, 4);
      d[i] = static_cast<double>(f);
    }
    count += static_cast<std::uint64_t>(block.size());
  });
  if (count != expected) throw ParseError("checkpoint parameter count mismatch");
  model.set_model_id(path.stem().string());
  return model;
}

}  // namespace canary
