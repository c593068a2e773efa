#include "bitag/model.hpp"

namespace bitag {

using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

nn::Parameter weight(const std::string& name, long rows, long cols,
                     std::mt19937_64& rng) {
  return nn::Parameter(name, nn::randn(rows, cols, 0.02, rng));
}

nn::Parameter bias(const std::string& name, long cols) {
  return nn::Parameter(name, Matrix::Zero(1, cols));
}

}  // namespace

TaggerModel::TaggerModel(int hidden_size, int num_relations, uint64_t seed)
    : hidden_(hidden_size),
      relations_(num_relations),
      w_([&] {
        std::mt19937_64 rng(seed);
        const long d = hidden_size;
        const long r = num_relations;
        return Weights{
            weight("model.sub_proj.w", d, d, rng), bias("model.sub_proj.b", d),
            weight("model.obj_proj.w", d, d, rng), bias("model.obj_proj.b", d),
            weight("model.rel_proj.w", d, d, rng), bias("model.rel_proj.b", d),
            weight("model.sub_start.w", 1, d, rng), bias("model.sub_start.b", 1),
            weight("model.sub_end.w", 1, d, rng), bias("model.sub_end.b", 1),
            weight("model.obj_start.w", 1, d, rng), bias("model.obj_start.b", 1),
            weight("model.obj_end.w", 1, d, rng), bias("model.obj_end.b", 1),
            weight("model.rel_head.w", r, d, rng), bias("model.rel_head.b", r),
            weight("model.rel_obj_start.w", r, d + r, rng),
            bias("model.rel_obj_start.b", r),
            weight("model.rel_obj_end.w", r, d + r, rng),
            bias("model.rel_obj_end.b", r),
            weight("model.rel_sub_start.w", r, d + r, rng),
            bias("model.rel_sub_start.b", r),
            weight("model.rel_sub_end.w", r, d + r, rng),
            bias("model.rel_sub_end.b", r)};
      }()) {
  if (hidden_size < 1 || num_relations < 1)
    throw std::invalid_argument("TaggerModel: invalid dimensions");
}

Var TaggerModel::affine(Tape& tape, Var x, nn::Parameter& w,
                        nn::Parameter& b) {
  return tape.add_rowvec(tape.matmul_nt(x, tape.leaf(w)), tape.leaf(b));
}

std::pair<Var, Var> TaggerModel::tag_subjects(Tape& tape,
                                              const TokenReps& reps) {
  Var h_sub = affine(tape, reps.h, w_.sub_proj_w, w_.sub_proj_b);
  Var start = tape.mask_rows(
      tape.sigmoid(affine(tape, h_sub, w_.sub_start_w, w_.sub_start_b)),
      reps.mask);
  Var end = tape.mask_rows(
      tape.sigmoid(affine(tape, h_sub, w_.sub_end_w, w_.sub_end_b)),
      reps.mask);
  return {start, end};
}

std::pair<Var, Var> TaggerModel::tag_objects(Tape& tape,
                                             const TokenReps& reps) {
  Var h_obj = affine(tape, reps.h, w_.obj_proj_w, w_.obj_proj_b);
  Var start = tape.mask_rows(
      tape.sigmoid(affine(tape, h_obj, w_.obj_start_w, w_.obj_start_b)),
      reps.mask);
  Var end = tape.mask_rows(
      tape.sigmoid(affine(tape, h_obj, w_.obj_end_w, w_.obj_end_b)),
      reps.mask);
  return {start, end};
}

Var TaggerModel::predict_relations(Tape& tape, const TokenReps& reps) {
  Var h_rel = affine(tape, reps.h, w_.rel_proj_w, w_.rel_proj_b);
  Var pooled = tape.masked_mean_rows(h_rel, reps.mask);
  return tape.sigmoid(affine(tape, pooled, w_.rel_head_w, w_.rel_head_b));
}

std::pair<Var, Var> TaggerModel::conditioned_grids(
    Tape& tape, const TokenReps& reps, Span span, Var p_rel,
    nn::Parameter& feat_w, nn::Parameter& feat_b, nn::Parameter& start_w,
    nn::Parameter& start_b, nn::Parameter& end_w, nn::Parameter& end_b) {
  if (p_rel.rows() != 1 || p_rel.cols() != relations_)
    throw std::invalid_argument("conditioned_grids: p_rel must be 1 x r");
  const long l = reps.length();
  Var feats = affine(tape, reps.h, feat_w, feat_b);
  Var v_span = span_embed(tape, reps, span);  // validates the span
  Var fused = tape.concat_cols(tape.add_rowvec(feats, v_span),
                               tape.broadcast_row(p_rel, l));
  Var start = tape.mask_rows(
      tape.sigmoid(affine(tape, fused, start_w, start_b)), reps.mask);
  Var end = tape.mask_rows(tape.sigmoid(affine(tape, fused, end_w, end_b)),
                           reps.mask);
  return {start, end};
}

std::pair<Var, Var> TaggerModel::tag_objects_given_subject(
    Tape& tape, const TokenReps& reps, Span subject, Var p_rel) {
  return conditioned_grids(tape, reps, subject, p_rel, w_.obj_proj_w,
                           w_.obj_proj_b, w_.rel_obj_start_w,
                           w_.rel_obj_start_b, w_.rel_obj_end_w,
                           w_.rel_obj_end_b);
}

std::pair<Var, Var> TaggerModel::tag_subjects_given_object(
    Tape& tape, const TokenReps& reps, Span object, Var p_rel) {
  return conditioned_grids(tape, reps, object, p_rel, w_.sub_proj_w,
                           w_.sub_proj_b, w_.rel_sub_start_w,
                           w_.rel_sub_start_b, w_.rel_sub_end_w,
                           w_.rel_sub_end_b);
}

void TaggerModel::collect_parameters(std::vector<nn::Parameter*>& out) {
  for (nn::Parameter* p :
       {&w_.sub_proj_w, &w_.sub_proj_b, &w_.obj_proj_w, &w_.obj_proj_b,
        &w_.rel_proj_w, &w_.rel_proj_b, &w_.sub_start_w, &w_.sub_start_b,
        &w_.sub_end_w, &w_.sub_end_b, &w_.obj_start_w, &w_.obj_start_b,
        &w_.obj_end_w, &w_.obj_end_b, &w_.rel_head_w, &w_.rel_head_b,
        &w_.rel_obj_start_w, &w_.rel_obj_start_b, &w_.rel_obj_end_w,
        &w_.rel_obj_end_b, &w_.rel_sub_start_w, &w_.rel_sub_start_b,
        &w_.rel_sub_end_w, &w_.rel_sub_end_b})
    out.push_back(p);
}

ForwardOutputs forward_training(Tape& tape, TaggerModel& model,
                                const TokenReps& reps, const TagTensors& gold,
                                const ModelSwitches& switches) {
  ForwardOutputs out;
  const int r = model.num_relations();

  if (switches.relation_prediction)
    out.p_rel = model.predict_relations(tape, reps);

  // Relation vector injected into the conditioned heads: gold bits under
  // teacher forcing, the predicted probabilities otherwise, zeros when the
  // relation prediction module is ablated.
  Var injected;
  if (!switches.relation_prediction) {
    injected = tape.constant(Matrix::Zero(1, r));
  } else if (switches.teacher_forcing) {
    injected = tape.constant(gold.rel_labels.transpose());
  } else {
    injected = out.p_rel;
  }

  if (switches.s2o) {
    std::tie(out.p_sub_start, out.p_sub_end) = model.tag_subjects(tape, reps);
    for (const ConditionedGold& cg : gold.per_subject) {
      auto [gs, ge] =
          model.tag_objects_given_subject(tape, reps, cg.span, injected);
      out.subject_grids.push_back(ConditionedGrids{cg.span, gs, ge});
    }
  }
  if (switches.o2s) {
    std::tie(out.p_obj_start, out.p_obj_end) = model.tag_objects(tape, reps);
    for (const ConditionedGold& cg : gold.per_object) {
      auto [gs, ge] =
          model.tag_subjects_given_object(tape, reps, cg.span, injected);
      out.object_grids.push_back(ConditionedGrids{cg.span, gs, ge});
    }
  }
  return out;
}

}  // namespace bitag
