#pragma once

#include "bitag/corpus.hpp"
#include "bitag/nn.hpp"
#include "bitag/types.hpp"

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace bitag {

// Word-level vocabulary for the randomly initialized encoder. Id 0 is the
// unknown token; known tokens are stored in sorted order for stable ids.
class TokenVocab {
 public:
  TokenVocab() = default;
  explicit TokenVocab(std::vector<std::string> tokens);
  static TokenVocab build(std::span<const Example> examples);

  int id(std::string_view token) const;  // 0 for unknown
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<int> encode(std::span<const std::string> tokens) const;

 private:
  std::vector<std::string> tokens_;  // tokens_[0] == "<unk>"
  std::map<std::string, int, std::less<>> ids_;
};

// Contextual token representations: h is l x d on some tape, mask marks the
// rows that correspond to real tokens. Downstream pooling and losses must not
// read masked rows.
struct TokenReps {
  nn::Var h;
  std::vector<int> mask;

  long length() const { return h.rows(); }
  long width() const { return h.cols(); }
};

// Two stochastic views of the same sentence under independent dropout masks.
struct DualViews {
  nn::Var a;
  nn::Var b;
};

// Representation provider. The production target is a pretrained transformer;
// this interface keeps the framework independent of the backend so that a
// small randomly initialized transformer can stand in where downloading
// pretrained weights is not an option.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual int hidden_size() const = 0;
  virtual int max_len() const = 0;
  // Builds the encoding subgraph for one sentence. Dropout is applied only
  // when training is true; inference mode is deterministic.
  virtual nn::Var encode(nn::Tape& tape, std::span<const int> token_ids,
                         bool training, std::mt19937_64& rng) = 0;
  virtual void collect_parameters(std::vector<nn::Parameter*>& out) = 0;
};

struct TransformerConfig {
  int vocab_size = 0;
  int hidden_size = 64;
  int layers = 2;
  int heads = 4;
  int ffn_multiplier = 4;
  int max_len = 100;
  double dropout = 0.1;
};

// Pre-norm transformer encoder with learned positional embeddings.
class TinyTransformerEncoder : public Encoder {
 public:
  TinyTransformerEncoder(TransformerConfig config, uint64_t seed);

  int hidden_size() const override { return config_.hidden_size; }
  int max_len() const override { return config_.max_len; }
  nn::Var encode(nn::Tape& tape, std::span<const int> token_ids, bool training,
                 std::mt19937_64& rng) override;
  void collect_parameters(std::vector<nn::Parameter*>& out) override;

  const TransformerConfig& config() const { return config_; }

 private:
  struct Layer {
    nn::Parameter ln1_g, ln1_b;
    nn::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Parameter ln2_g, ln2_b;
    nn::Parameter w1, b1, w2, b2;
  };

  TransformerConfig config_;
  nn::Parameter tok_emb_;  // vocab x d
  nn::Parameter pos_emb_;  // max_len x d
  std::vector<std::unique_ptr<Layer>> layers_;
  nn::Parameter ln_f_g_, ln_f_b_;
};

TokenReps encode_tokens(Encoder& encoder, nn::Tape& tape,
                        std::span<const int> token_ids, bool training,
                        std::mt19937_64& rng);

// Two training-mode passes over the same sentence; the independent dropout
// draws are the data augmentation for the contrastive objective.
DualViews encode_dual(Encoder& encoder, nn::Tape& tape,
                      std::span<const int> token_ids, std::mt19937_64& rng);

// Mean of the token vectors over the inclusive span.
nn::Var span_embed(nn::Tape& tape, const TokenReps& reps, Span span);

}  // namespace bitag
