#pragma once

#include "bitag/corpus.hpp"
#include "bitag/encoder.hpp"
#include "bitag/nn.hpp"

#include <utility>
#include <vector>

namespace bitag {

// Ablation and training-mode switches for the tagging heads.
struct ModelSwitches {
  bool s2o = true;
  bool o2s = true;
  bool relation_prediction = true;
  bool teacher_forcing = true;  // gold relation vector into conditioned heads
};

// All learned heads on top of the encoder: three role-specific d->d
// projections shared by both directions, the unconditional start/end taggers,
// the relation prediction head, and the relation-specific taggers that fuse
// token features with the conditioning span embedding and the relation
// vector.
class TaggerModel {
 public:
  TaggerModel(int hidden_size, int num_relations, uint64_t seed);

  int hidden_size() const { return hidden_; }
  int num_relations() const { return relations_; }

  // Probabilities are in (0,1) everywhere, forced to exactly 0 at padding.
  std::pair<nn::Var, nn::Var> tag_subjects(nn::Tape& tape,
                                           const TokenReps& reps);
  std::pair<nn::Var, nn::Var> tag_objects(nn::Tape& tape,
                                          const TokenReps& reps);
  // Mean-pools the relation feature over non-padding tokens, then applies the
  // multi-label relation head. 1 x r.
  nn::Var predict_relations(nn::Tape& tape, const TokenReps& reps);

  // l x r probability grids (one column per relation). The s2o grid reads the
  // object-feature projection plus the conditioned subject embedding; the o2s
  // grid mirrors it with the subject-feature projection.
  std::pair<nn::Var, nn::Var> tag_objects_given_subject(nn::Tape& tape,
                                                        const TokenReps& reps,
                                                        Span subject,
                                                        nn::Var p_rel);
  std::pair<nn::Var, nn::Var> tag_subjects_given_object(nn::Tape& tape,
                                                        const TokenReps& reps,
                                                        Span object,
                                                        nn::Var p_rel);

  void collect_parameters(std::vector<nn::Parameter*>& out);

  // Exposed for wiring tests and serialization.
  struct Weights {
    nn::Parameter sub_proj_w, sub_proj_b;
    nn::Parameter obj_proj_w, obj_proj_b;
    nn::Parameter rel_proj_w, rel_proj_b;
    nn::Parameter sub_start_w, sub_start_b;
    nn::Parameter sub_end_w, sub_end_b;
    nn::Parameter obj_start_w, obj_start_b;
    nn::Parameter obj_end_w, obj_end_b;
    nn::Parameter rel_head_w, rel_head_b;
    nn::Parameter rel_obj_start_w, rel_obj_start_b;
    nn::Parameter rel_obj_end_w, rel_obj_end_b;
    nn::Parameter rel_sub_start_w, rel_sub_start_b;
    nn::Parameter rel_sub_end_w, rel_sub_end_b;
  };
  Weights& weights() { return w_; }

 private:
  nn::Var affine(nn::Tape& tape, nn::Var x, nn::Parameter& w,
                 nn::Parameter& b);
  std::pair<nn::Var, nn::Var> conditioned_grids(
      nn::Tape& tape, const TokenReps& reps, Span span, nn::Var p_rel,
      nn::Parameter& feat_w, nn::Parameter& feat_b, nn::Parameter& start_w,
      nn::Parameter& start_b, nn::Parameter& end_w, nn::Parameter& end_b);

  int hidden_;
  int relations_;
  Weights w_;
};

// Probability grids conditioned on one span.
struct ConditionedGrids {
  Span span;
  nn::Var start;  // l x r
  nn::Var end;
};

struct ForwardOutputs {
  nn::Var p_sub_start, p_sub_end;  // l x 1, s2o direction
  nn::Var p_obj_start, p_obj_end;  // l x 1, o2s direction
  nn::Var p_rel;                   // 1 x r
  std::vector<ConditionedGrids> subject_grids;  // conditioned on subjects
  std::vector<ConditionedGrids> object_grids;   // conditioned on objects
};

// Teacher-forced training pass: relation-specific grids are conditioned on
// the gold subjects/objects; unconditional heads run regardless.
ForwardOutputs forward_training(nn::Tape& tape, TaggerModel& model,
                                const TokenReps& reps, const TagTensors& gold,
                                const ModelSwitches& switches);

}  // namespace bitag
