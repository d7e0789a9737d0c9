#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "promptcanary/model.hpp"

namespace canary {

/// A deliberately small pre-LN transformer decoder, character-level, with
/// exact analytic gradients. Math runs in double; checkpoints store float32.
struct TinyLmConfig {
  std::string alphabet;  // empty selects CharTokenizer::default_alphabet()
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 64;
  int max_seq = 256;
  std::uint64_t init_seed = 0;
};

struct TinyLmParams {
  struct Layer {
    Eigen::VectorXd ln1_g, ln1_b;
    Eigen::MatrixXd wq, wk, wv, wo;
    Eigen::VectorXd bq, bk, bv, bo;
    Eigen::VectorXd ln2_g, ln2_b;
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
  };
  Eigen::MatrixXd tok_emb;  // V x D
  Eigen::MatrixXd pos_emb;  // max_seq x D
  std::vector<Layer> layers;
  Eigen::VectorXd lnf_g, lnf_b;
  Eigen::MatrixXd head;    // D x V
  Eigen::VectorXd head_b;  // V
};

/// Visits every parameter block in the canonical order shared by checkpoint
/// serialization, gradient updates and optimizer state.
template <typename Params, typename Fn>
void for_each_param_block(Params& p, Fn&& fn) {
  fn(std::string("tok_emb"), p.tok_emb);
  fn(std::string("pos_emb"), p.pos_emb);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& lay = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    fn(pre + "ln1_g", lay.ln1_g);
    fn(pre + "ln1_b", lay.ln1_b);
    fn(pre + "wq", lay.wq);
    fn(pre + "bq", lay.bq);
    fn(pre + "wk", lay.wk);
    fn(pre + "bk", lay.bk);
    fn(pre + "wv", lay.wv);
    fn(pre + "bv", lay.bv);
    fn(pre + "wo", lay.wo);
    fn(pre + "bo", lay.bo);
    fn(pre + "ln2_g", lay.ln2_g);
    fn(pre + "ln2_b", lay.ln2_b);
    fn(pre + "w1", lay.w1);
    fn(pre + "b1", lay.b1);
    fn(pre + "w2", lay.w2);
    fn(pre + "b2", lay.b2);
  }
  fn(std::string("lnf_g"), p.lnf_g);
  fn(std::string("lnf_b"), p.lnf_b);
  fn(std::string("head"), p.head);
  fn(std::string("head_b"), p.head_b);
}

/// One weighted span loss over an explicit token stream. Parameter-gradient
/// terms for training are expressed this way.
struct TokenLossTerm {
  double weight = 1.0;
  std::vector<TokenId> tokens;
  ScoredSpan span;
};

class TinyLm final : public GenerativeModel {
public:
  explicit TinyLm(TinyLmConfig cfg);

  /// Checkpoint: versioned magic + dims + alphabet header, then the parameter
  /// blocks as a little-endian float32 blob in canonical order.
  static TinyLm load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Rounds every parameter to its float32 value so a live model and a
  /// reloaded checkpoint compute bit-identical results from here on.
  void quantize_to_float32();

  /// save + quantize, the combination training loops should use.
  void checkpoint(const std::filesystem::path& path);

  std::string model_id() const override { return model_id_; }
  void set_model_id(std::string id) { model_id_ = std::move(id); }
  Capabilities capabilities() const override { return {true, true, true, true}; }

  std::string generate(std::string_view prompt, const GenerationConfig& cfg) const override;
  double sequence_loss(std::string_view prompt, std::string_view continuation) const override;
  double token_span_loss(std::span<const TokenId> tokens, ScoredSpan span) const override;
  TokenGradients token_gradients(std::span<const TokenId> tokens,
                                 std::span<const std::size_t> mutable_positions,
                                 ScoredSpan span) const override;
  void apply_gradient_update(const ParameterObjective& objective, double learning_rate) override;
  const CharTokenizer& tokenizer() const override { return tokenizer_; }

  const TinyLmConfig& config() const { return cfg_; }
  const TinyLmParams& params() const { return params_; }
  TinyLmParams& params() { return params_; }

  /// Parameter gradients of sum_i weight_i * token_span_loss(tokens_i, span_i),
  /// accumulated in term order. Optionally reports the objective value the
  /// gradients were taken at.
  TinyLmParams parameter_gradients(const std::vector<TokenLossTerm>& terms,
                                   double* objective_value = nullptr) const;

  /// Gradient-descent step on explicit token-level terms.
  void apply_token_update(const std::vector<TokenLossTerm>& terms, double learning_rate);

  /// token_span_loss with the input embedding of tokens[position] shifted by
  /// `offset`. Evaluates soft token perturbations; the finite-difference
  /// oracle for token gradients is built on it.
  double span_loss_with_embedding_offset(std::span<const TokenId> tokens, ScoredSpan span,
                                         std::size_t position,
                                         const Eigen::RowVectorXd& offset) const;

  /// Raw logits for the token that would follow `tokens`.
  Eigen::RowVectorXd next_token_logits(std::span<const TokenId> tokens) const;

  /// Zero-valued gradient accumulator with this model's shapes.
  TinyLmParams zero_gradients() const;

private:
  struct Cache;

  std::vector<TokenId> internal_ids(std::span<const TokenId> tokens) const;
  void forward(const std::vector<TokenId>& ids, Cache& cache,
               const Eigen::RowVectorXd* emb_offset, std::size_t offset_pos) const;
  double backward(const std::vector<TokenId>& ids, ScoredSpan internal_span, double weight,
                  TinyLmParams* grads, Eigen::MatrixXd* dx0) const;
  void validate_span(std::span<const TokenId> tokens, ScoredSpan span) const;

  TinyLmConfig cfg_;
  CharTokenizer tokenizer_;
  TinyLmParams params_;
  std::string model_id_;
};

}  // namespace canary
