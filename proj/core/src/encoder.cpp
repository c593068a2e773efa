#include "bitag/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace bitag {

using nn::Matrix;
using nn::Tape;
using nn::Var;

TokenVocab::TokenVocab(std::vector<std::string> tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  tokens_.push_back("<unk>");
  for (std::string& t : tokens)
    if (t != "<unk>") tokens_.push_back(std::move(t));
  for (size_t i = 0; i < tokens_.size(); ++i)
    ids_.emplace(tokens_[i], static_cast<int>(i));
}

TokenVocab TokenVocab::build(std::span<const Example> examples) {
  std::vector<std::string> all;
  for (const Example& ex : examples)
    all.insert(all.end(), ex.tokens.begin(), ex.tokens.end());
  return TokenVocab(std::move(all));
}

int TokenVocab::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? 0 : it->second;
}

std::vector<int> TokenVocab::encode(
    std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id(t));
  return ids;
}

namespace {

nn::Parameter make_param(const std::string& name, long rows, long cols,
                         double stddev, std::mt19937_64& rng) {
  if (stddev == 0.0) return nn::Parameter(name, Matrix::Zero(rows, cols));
  return nn::Parameter(name, nn::randn(rows, cols, stddev, rng));
}

nn::Parameter ones_param(const std::string& name, long cols) {
  return nn::Parameter(name, Matrix::Ones(1, cols));
}

nn::Parameter zeros_param(const std::string& name, long cols) {
  return nn::Parameter(name, Matrix::Zero(1, cols));
}

}  // namespace

TinyTransformerEncoder::TinyTransformerEncoder(TransformerConfig config,
                                               uint64_t seed)
    : config_(config),
      tok_emb_("enc.tok_emb", Matrix()),
      pos_emb_("enc.pos_emb", Matrix()),
      ln_f_g_("enc.ln_f.g", Matrix::Ones(1, config.hidden_size)),
      ln_f_b_("enc.ln_f.b", Matrix::Zero(1, config.hidden_size)) {
  if (config_.vocab_size < 1)
    throw std::invalid_argument("TinyTransformerEncoder: vocab_size < 1");
  if (config_.hidden_size % config_.heads != 0)
    throw std::invalid_argument(
        "TinyTransformerEncoder: hidden_size not divisible by heads");
  std::mt19937_64 rng(seed);
  const long d = config_.hidden_size;
  const long f = d * config_.ffn_multiplier;
  const double std = 0.02;
  tok_emb_ = make_param("enc.tok_emb", config_.vocab_size, d, std, rng);
  pos_emb_ = make_param("enc.pos_emb", config_.max_len, d, std, rng);
  for (int i = 0; i < config_.layers; ++i) {
    std::string p = "enc.l" + std::to_string(i) + ".";
    layers_.push_back(std::make_unique<Layer>(Layer{
        ones_param(p + "ln1.g", d), zeros_param(p + "ln1.b", d),
        make_param(p + "wq", d, d, std, rng), zeros_param(p + "bq", d),
        make_param(p + "wk", d, d, std, rng), zeros_param(p + "bk", d),
        make_param(p + "wv", d, d, std, rng), zeros_param(p + "bv", d),
        make_param(p + "wo", d, d, std, rng), zeros_param(p + "bo", d),
        ones_param(p + "ln2.g", d), zeros_param(p + "ln2.b", d),
        make_param(p + "w1", f, d, std, rng), zeros_param(p + "b1", f),
        make_param(p + "w2", d, f, std, rng), zeros_param(p + "b2", d)}));
  }
}

nn::Var TinyTransformerEncoder::encode(Tape& tape,
                                       std::span<const int> token_ids,
                                       bool training, std::mt19937_64& rng) {
  const long l = static_cast<long>(token_ids.size());
  if (l == 0) throw DataError("encode: empty token sequence");
  if (l > config_.max_len)
    throw DataError("encode: sequence length " + std::to_string(l) +
                    " exceeds max_len " + std::to_string(config_.max_len));

  const long d = config_.hidden_size;
  const int heads = config_.heads;
  const long dk = d / heads;
  const double p = training ? config_.dropout : 0.0;

  std::vector<int> ids(token_ids.begin(), token_ids.end());
  std::vector<int> pos(static_cast<size_t>(l));
  for (long i = 0; i < l; ++i) pos[static_cast<size_t>(i)] = static_cast<int>(i);

  Var x = tape.add(tape.embedding_rows(tok_emb_, std::move(ids)),
                   tape.embedding_rows(pos_emb_, std::move(pos)));
  x = tape.dropout(x, p, rng);

  auto affine = [&](Var in, nn::Parameter& w, nn::Parameter& b) {
    return tape.add_rowvec(tape.matmul_nt(in, tape.leaf(w)), tape.leaf(b));
  };

  for (auto& layer : layers_) {
    Var n1 = tape.layer_norm(x, tape.leaf(layer->ln1_g), tape.leaf(layer->ln1_b));
    Var q = affine(n1, layer->wq, layer->bq);
    Var k = affine(n1, layer->wk, layer->bk);
    Var v = affine(n1, layer->wv, layer->bv);
    Var heads_out;
    for (int h = 0; h < heads; ++h) {
      Var qh = tape.slice_cols(q, h * dk, dk);
      Var kh = tape.slice_cols(k, h * dk, dk);
      Var vh = tape.slice_cols(v, h * dk, dk);
      Var scores = tape.scale(tape.matmul_nt(qh, kh),
                              1.0 / std::sqrt(static_cast<double>(dk)));
      Var attn = tape.softmax_rows(scores);
      Var oh = tape.matmul(attn, vh);
      heads_out = h == 0 ? oh : tape.concat_cols(heads_out, oh);
    }
    Var attn_out = affine(heads_out, layer->wo, layer->bo);
    x = tape.add(x, tape.dropout(attn_out, p, rng));

    Var n2 = tape.layer_norm(x, tape.leaf(layer->ln2_g), tape.leaf(layer->ln2_b));
    Var ff = affine(tape.gelu(affine(n2, layer->w1, layer->b1)), layer->w2,
                    layer->b2);
    x = tape.add(x, tape.dropout(ff, p, rng));
  }
  return tape.layer_norm(x, tape.leaf(ln_f_g_), tape.leaf(ln_f_b_));
}

void TinyTransformerEncoder::collect_parameters(
    std::vector<nn::Parameter*>& out) {
  out.push_back(&tok_emb_);
  out.push_back(&pos_emb_);
  for (auto& l : layers_) {
    for (nn::Parameter* p :
         {&l->ln1_g, &l->ln1_b, &l->wq, &l->bq, &l->wk, &l->bk, &l->wv, &l->bv,
          &l->wo, &l->bo, &l->ln2_g, &l->ln2_b, &l->w1, &l->b1, &l->w2, &l->b2})
      out.push_back(p);
  }
  out.push_back(&ln_f_g_);
  out.push_back(&ln_f_b_);
}

TokenReps encode_tokens(Encoder& encoder, Tape& tape,
                        std::span<const int> token_ids, bool training,
                        std::mt19937_64& rng) {
  TokenReps reps;
  reps.h = encoder.encode(tape, token_ids, training, rng);
  reps.mask.assign(token_ids.size(), 1);
  return reps;
}

DualViews encode_dual(Encoder& encoder, Tape& tape,
                      std::span<const int> token_ids, std::mt19937_64& rng) {
  DualViews views;
  views.a = encoder.encode(tape, token_ids, true, rng);
  views.b = encoder.encode(tape, token_ids, true, rng);
  return views;
}

nn::Var span_embed(Tape& tape, const TokenReps& reps, Span span) {
  const long l = reps.length();
  if (span.start < 0 || span.end < span.start || span.end >= l)
    throw std::invalid_argument("span_embed: invalid span");
  for (int i = span.start; i <= span.end; ++i)
    if (!reps.mask[static_cast<size_t>(i)])
      throw std::invalid_argument("span_embed: span covers padding");
  return tape.mean_rows_range(reps.h, span.start, span.end - span.start + 1);
}

}  // namespace bitag
