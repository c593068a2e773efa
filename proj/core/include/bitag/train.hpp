#pragma once

#include "bitag/config.hpp"
#include "bitag/contrastive.hpp"
#include "bitag/corpus.hpp"
#include "bitag/decode.hpp"
#include "bitag/metrics.hpp"
#include "bitag/model.hpp"

#include <memory>
#include <ostream>
#include <span>
#include <vector>

namespace bitag {

// Raised when a training step produces a non-finite loss; dump carries a JSON
// description of the offending batch.
struct TrainingAbort : TrainingError {
  TrainingAbort(const std::string& msg, std::string dump_json)
      : TrainingError(msg), dump(std::move(dump_json)) {}
  std::string dump;
};

// Binary cross-entropy on one probability, clamped to [1e-7, 1 - 1e-7].
double bce(double p, double y);

// Token-mean BCE of an l x 1 probability column against a length-l gold
// vector. Padding positions must already be excluded from both.
nn::Var head_loss(nn::Tape& tape, nn::Var probs, const Eigen::VectorXd& gold);

// Entry-mean BCE of an l x r probability grid against an r x l gold grid
// (mean over tokens, then relations).
nn::Var grid_loss(nn::Tape& tape, nn::Var grid, const Eigen::MatrixXd& gold);

// Linear warmup over the first quarter of total steps, constant afterwards.
// Steps are 1-based.
double warmup_lr(double peak, long step, long total_steps);

struct LossBreakdown {
  double sub_head = 0, sub_tail = 0;
  double obj_head = 0, obj_tail = 0;
  double rel = 0;
  double rel_obj_head = 0, rel_obj_tail = 0;
  double rel_sub_head = 0, rel_sub_tail = 0;
  double contrastive = 0;
  double total = 0;
};

std::string loss_breakdown_to_json(const LossBreakdown& b);

struct BatchLoss {
  nn::Var total;
  LossBreakdown breakdown;
};

// Unweighted sum of the nine BCE terms (each averaged over the batch) plus
// the contrastive loss summed over its groups.
BatchLoss total_loss(nn::Tape& tape, std::span<const ForwardOutputs> outputs,
                     std::span<const TagTensors* const> gold,
                     std::span<const ContrastiveGroup> groups,
                     const ContrastiveConfig& contrastive);

ModelSwitches switches_from(const RunConfig& config);

struct TrainResult {
  double best_f1 = 0.0;
  int best_epoch = -1;
  int epochs_run = 0;
  long steps = 0;
  bool early_stopped = false;
  bool reached_target = false;
};

// Owns the encoder, heads, optimizer and vocabularies for one training run.
// Validation runs full inference after every epoch; the best parameters are
// kept and restored at the end.
class Trainer {
 public:
  Trainer(Corpus train_corpus, Corpus valid_corpus, RunConfig config);

  TrainResult run(std::ostream* log_jsonl = nullptr);

  // One optimizer step over the given example indices; exposed for tests.
  LossBreakdown train_step(std::span<const size_t> indices, double lr);

  PRF evaluate(const Corpus& corpus);
  Prediction predict(const Example& example);

  TinyTransformerEncoder& encoder() { return *encoder_; }
  TaggerModel& model() { return *model_; }
  const TokenVocab& token_vocab() const { return tokens_; }
  const RelationVocab& relations() const { return train_.relations; }
  const RunConfig& config() const { return config_; }
  const std::vector<nn::Parameter*>& parameters() const { return params_; }

 private:
  std::vector<nn::Matrix> snapshot() const;
  void restore(const std::vector<nn::Matrix>& snap);

  RunConfig config_;
  Corpus train_;
  Corpus valid_;
  TokenVocab tokens_;
  std::vector<TagTensors> gold_;
  std::unique_ptr<TinyTransformerEncoder> encoder_;
  std::unique_ptr<TaggerModel> model_;
  std::vector<nn::Parameter*> params_;
  std::unique_ptr<nn::Adam> adam_;
  std::mt19937_64 rng_;
  nn::Tape tape_;
};

}  // namespace bitag
