#include "bitag/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bitag {

using nlohmann::json;
using nn::Matrix;
using nn::Tape;
using nn::Var;

double bce(double p, double y) {
  constexpr double eps = 1e-7;
  p = std::clamp(p, eps, 1.0 - eps);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

Var head_loss(Tape& tape, Var probs, const Eigen::VectorXd& gold) {
  if (probs.cols() != 1 || probs.rows() != gold.size())
    throw std::invalid_argument("head_loss: probability/gold length mismatch");
  return tape.bce_mean(probs, gold);
}

Var grid_loss(Tape& tape, Var grid, const Eigen::MatrixXd& gold) {
  if (grid.rows() != gold.cols() || grid.cols() != gold.rows())
    throw std::invalid_argument("grid_loss: grid/gold shape mismatch");
  return tape.bce_mean(grid, gold.transpose());
}

double warmup_lr(double peak, long step, long total_steps) {
  if (step < 1 || total_steps < 1)
    throw std::invalid_argument("warmup_lr: steps must be positive");
  long warmup = std::max<long>(1, total_steps / 4);
  if (step >= warmup) return peak;
  return peak * static_cast<double>(step) / static_cast<double>(warmup);
}

std::string loss_breakdown_to_json(const LossBreakdown& b) {
  return json{{"sub_head", b.sub_head},
              {"sub_tail", b.sub_tail},
              {"obj_head", b.obj_head},
              {"obj_tail", b.obj_tail},
              {"rel", b.rel},
              {"rel_obj_head", b.rel_obj_head},
              {"rel_obj_tail", b.rel_obj_tail},
              {"rel_sub_head", b.rel_sub_head},
              {"rel_sub_tail", b.rel_sub_tail},
              {"contrastive", b.contrastive},
              {"total", b.total}}
      .dump();
}

namespace {

Var reduce_mean_over_batch(Tape& tape, const std::vector<Var>& terms,
                           size_t batch_size) {
  if (terms.empty() || batch_size == 0)
    return tape.constant(Matrix::Zero(1, 1));
  Var acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
  return tape.scale(acc, 1.0 / static_cast<double>(batch_size));
}

Var grids_term(Tape& tape, const std::vector<ConditionedGrids>& grids,
               const std::vector<ConditionedGold>& gold, bool start_side) {
  std::vector<Var> per_grid;
  for (size_t i = 0; i < grids.size(); ++i) {
    const Eigen::MatrixXd& target = start_side ? gold[i].start : gold[i].end;
    per_grid.push_back(grid_loss(
        tape, start_side ? grids[i].start : grids[i].end, target));
  }
  // uniform average over conditioned spans
  return reduce_mean_over_batch(tape, per_grid, per_grid.size());
}

}  // namespace

BatchLoss total_loss(Tape& tape, std::span<const ForwardOutputs> outputs,
                     std::span<const TagTensors* const> gold,
                     std::span<const ContrastiveGroup> groups,
                     const ContrastiveConfig& contrastive) {
  if (outputs.size() != gold.size())
    throw std::invalid_argument("total_loss: outputs/gold size mismatch");
  const size_t batch = outputs.size();

  std::vector<Var> sub_head, sub_tail, obj_head, obj_tail, rel;
  std::vector<Var> rel_obj_head, rel_obj_tail, rel_sub_head, rel_sub_tail;
  for (size_t i = 0; i < batch; ++i) {
    const ForwardOutputs& o = outputs[i];
    const TagTensors& g = *gold[i];
    if (o.p_sub_start.valid()) {
      sub_head.push_back(head_loss(tape, o.p_sub_start, g.sub_start));
      sub_tail.push_back(head_loss(tape, o.p_sub_end, g.sub_end));
    }
    if (o.p_obj_start.valid()) {
      obj_head.push_back(head_loss(tape, o.p_obj_start, g.obj_start));
      obj_tail.push_back(head_loss(tape, o.p_obj_end, g.obj_end));
    }
    if (o.p_rel.valid())
      rel.push_back(head_loss(tape, o.p_rel, g.rel_labels));
    if (!o.subject_grids.empty()) {
      rel_obj_head.push_back(
          grids_term(tape, o.subject_grids, g.per_subject, true));
      rel_obj_tail.push_back(
          grids_term(tape, o.subject_grids, g.per_subject, false));
    }
    if (!o.object_grids.empty()) {
      rel_sub_head.push_back(
          grids_term(tape, o.object_grids, g.per_object, true));
      rel_sub_tail.push_back(
          grids_term(tape, o.object_grids, g.per_object, false));
    }
  }

  Var l_sub_head = reduce_mean_over_batch(tape, sub_head, batch);
  Var l_sub_tail = reduce_mean_over_batch(tape, sub_tail, batch);
  Var l_obj_head = reduce_mean_over_batch(tape, obj_head, batch);
  Var l_obj_tail = reduce_mean_over_batch(tape, obj_tail, batch);
  Var l_rel = reduce_mean_over_batch(tape, rel, batch);
  Var l_rel_obj_head = reduce_mean_over_batch(tape, rel_obj_head, batch);
  Var l_rel_obj_tail = reduce_mean_over_batch(tape, rel_obj_tail, batch);
  Var l_rel_sub_head = reduce_mean_over_batch(tape, rel_sub_head, batch);
  Var l_rel_sub_tail = reduce_mean_over_batch(tape, rel_sub_tail, batch);
  Var l_contrastive = (contrastive.enabled && !groups.empty())
                          ? loss_lc(tape, groups, contrastive)
                          : tape.constant(Matrix::Zero(1, 1));

  Var total = l_sub_head;
  for (Var v : {l_sub_tail, l_obj_head, l_obj_tail, l_rel, l_rel_obj_head,
                l_rel_obj_tail, l_rel_sub_head, l_rel_sub_tail,
                l_contrastive})
    total = tape.add(total, v);

  BatchLoss out;
  out.total = total;
  out.breakdown =
      LossBreakdown{l_sub_head.scalar(),     l_sub_tail.scalar(),
                    l_obj_head.scalar(),     l_obj_tail.scalar(),
                    l_rel.scalar(),          l_rel_obj_head.scalar(),
                    l_rel_obj_tail.scalar(), l_rel_sub_head.scalar(),
                    l_rel_sub_tail.scalar(), l_contrastive.scalar(),
                    total.scalar()};
  return out;
}

ModelSwitches switches_from(const RunConfig& config) {
  ModelSwitches s;
  s.s2o = config.direction_s2o;
  s.o2s = config.direction_o2s;
  s.relation_prediction = config.relation_prediction;
  s.teacher_forcing = config.train.teacher_forcing;
  return s;
}

Trainer::Trainer(Corpus train_corpus, Corpus valid_corpus, RunConfig config)
    : config_(std::move(config)),
      train_(std::move(train_corpus)),
      valid_(std::move(valid_corpus)),
      rng_(config_.train.seed + 2) {
  validate(config_);
  if (train_.examples.empty()) throw DataError("Trainer: empty training corpus");
  if (!(train_.relations == valid_.relations))
    throw DataError("Trainer: train/valid relation vocabularies differ");

  tokens_ = TokenVocab::build(train_.examples);
  const int r = train_.relations.size();
  if (r < 1) throw DataError("Trainer: empty relation vocabulary");
  gold_.reserve(train_.examples.size());
  for (const Example& ex : train_.examples)
    gold_.push_back(build_gold_tensors(ex, r));

  TransformerConfig enc_cfg;
  enc_cfg.vocab_size = tokens_.size();
  enc_cfg.hidden_size = config_.hidden_size;
  enc_cfg.layers = config_.layers;
  enc_cfg.heads = config_.heads;
  enc_cfg.ffn_multiplier = config_.ffn_multiplier;
  enc_cfg.max_len = config_.max_len;
  enc_cfg.dropout = config_.dropout;
  encoder_ = std::make_unique<TinyTransformerEncoder>(enc_cfg,
                                                      config_.train.seed);
  model_ = std::make_unique<TaggerModel>(config_.hidden_size, r,
                                         config_.train.seed + 1);
  encoder_->collect_parameters(params_);
  model_->collect_parameters(params_);
  adam_ = std::make_unique<nn::Adam>(params_);
}

LossBreakdown Trainer::train_step(std::span<const size_t> indices, double lr) {
  tape_.clear();
  const ModelSwitches switches = switches_from(config_);
  const bool use_contrastive = config_.contrastive.enabled;

  std::vector<const Example*> batch_examples;
  std::vector<const TagTensors*> batch_gold;
  std::vector<DualViews> views;
  std::vector<ForwardOutputs> outputs;
  for (size_t idx : indices) {
    const Example& ex = train_.examples.at(idx);
    const TagTensors& gold = gold_.at(idx);
    std::vector<int> ids = tokens_.encode(ex.tokens);
    TokenReps reps;
    if (use_contrastive) {
      DualViews v = encode_dual(*encoder_, tape_, ids, rng_);
      views.push_back(v);
      reps = TokenReps{v.a, std::vector<int>(ids.size(), 1)};
    } else {
      reps = encode_tokens(*encoder_, tape_, ids, true, rng_);
    }
    outputs.push_back(forward_training(tape_, *model_, reps, gold, switches));
    batch_examples.push_back(&ex);
    batch_gold.push_back(&gold);
  }

  std::vector<ContrastiveGroup> groups;
  if (use_contrastive) {
    groups = build_groups(tape_, batch_examples, views, AnchorRole::Subject);
    std::vector<ContrastiveGroup> object_groups =
        build_groups(tape_, batch_examples, views, AnchorRole::Object);
    groups.insert(groups.end(), object_groups.begin(), object_groups.end());
  }

  BatchLoss loss =
      total_loss(tape_, outputs, batch_gold, groups, config_.contrastive);
  if (!std::isfinite(loss.breakdown.total)) {
    json dump;
    dump["loss"] = json::parse(loss_breakdown_to_json(loss.breakdown));
    json texts = json::array();
    for (const Example* ex : batch_examples) texts.push_back(ex->text);
    dump["batch"] = std::move(texts);
    throw TrainingAbort("non-finite loss encountered", dump.dump(2));
  }
  tape_.backward(loss.total);
  adam_->step(lr);
  return loss.breakdown;
}

PRF Trainer::evaluate(const Corpus& corpus) {
  std::vector<std::vector<SpanTriple>> preds, golds;
  preds.reserve(corpus.examples.size());
  golds.reserve(corpus.examples.size());
  for (const Example& ex : corpus.examples) {
    preds.push_back(predict(ex).triple_set());
    golds.push_back(ex.triples);
  }
  return micro_prf(preds, golds, corpus.standard);
}

Prediction Trainer::predict(const Example& example) {
  return infer(example, tokens_, *encoder_, *model_, config_.decode,
               switches_from(config_));
}

std::vector<Matrix> Trainer::snapshot() const {
  std::vector<Matrix> snap;
  snap.reserve(params_.size());
  for (const nn::Parameter* p : params_) snap.push_back(p->value);
  return snap;
}

void Trainer::restore(const std::vector<Matrix>& snap) {
  for (size_t i = 0; i < params_.size(); ++i) params_[i]->value = snap[i];
}

TrainResult Trainer::run(std::ostream* log) {
  const size_t n = train_.examples.size();
  const long batch = config_.train.batch_size;
  const long steps_per_epoch =
      (static_cast<long>(n) + batch - 1) / batch;
  const long total_steps = steps_per_epoch * config_.train.max_epochs;

  TrainResult result;
  std::vector<Matrix> best = snapshot();
  int bad_validations = 0;
  long global_step = 0;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 1; epoch <= config_.train.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (size_t off = 0; off < n; off += static_cast<size_t>(batch)) {
      size_t count = std::min(static_cast<size_t>(batch), n - off);
      std::span<const size_t> indices(order.data() + off, count);
      ++global_step;
      double lr = warmup_lr(config_.train.peak_lr, global_step, total_steps);
      LossBreakdown b = train_step(indices, lr);
      if (log)
        *log << json{{"type", "step"},
                     {"epoch", epoch},
                     {"step", global_step},
                     {"lr", lr},
                     {"loss", json::parse(loss_breakdown_to_json(b))}}
                    .dump()
             << "\n";
    }

    PRF v = evaluate(valid_);
    bool improved = v.f1 > result.best_f1 || result.best_epoch < 0;
    if (improved) {
      result.best_f1 = v.f1;
      result.best_epoch = epoch;
      best = snapshot();
      bad_validations = 0;
    } else {
      ++bad_validations;
    }
    result.epochs_run = epoch;
    result.steps = global_step;
    if (log)
      *log << json{{"type", "epoch"},
                   {"epoch", epoch},
                   {"valid", json{{"precision", v.precision},
                                  {"recall", v.recall},
                                  {"f1", v.f1}}},
                   {"best_f1", result.best_f1},
                   {"improved", improved}}
                  .dump()
           << "\n";
    if (v.f1 >= config_.train.stop_at_f1) {
      result.reached_target = true;
      break;
    }
    if (bad_validations >= config_.train.patience) {
      result.early_stopped = true;
      break;
    }
  }

  restore(best);
  return result;
}

}  // namespace bitag
