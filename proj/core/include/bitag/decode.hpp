#pragma once

#include "bitag/corpus.hpp"
#include "bitag/encoder.hpp"
#include "bitag/model.hpp"
#include "bitag/types.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace bitag {

struct DecodeConfig {
  double span_threshold = 0.5;  // start/end tagging threshold
  double rel_threshold = 0.5;
  // When set, grid rows for relations with p_rel below rel_threshold are
  // zeroed before decoding.
  bool relation_filter = true;
};

enum class Provenance { S2O, O2S, Both };
std::string to_string(Provenance p);

struct PredictedTriple {
  SpanTriple triple;
  Provenance provenance = Provenance::S2O;
};

// Union of the two direction results; set semantics over (subject span,
// relation, object span), sorted for stable output.
struct Prediction {
  std::vector<PredictedTriple> triples;

  std::vector<SpanTriple> triple_set() const;
};

// Thresholds both vectors into start/end index sets, then scans starts in
// ascending order pairing each with the nearest unconsumed end at or after
// it. Starts with no available end are dropped.
std::vector<Span> pair_spans(const Eigen::VectorXd& start_probs,
                             const Eigen::VectorXd& end_probs,
                             double threshold);

// Applies the span pairing rule independently per relation row of the r x l
// grids.
std::vector<std::pair<int, Span>> decode_grids(
    const Eigen::MatrixXd& start_grid, const Eigen::MatrixXd& end_grid,
    double threshold);

// Produces the r x l start/end grids conditioned on one extracted span.
using GridFn =
    std::function<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>(Span)>;

// Direction-agnostic inputs to the final decode stage. A direction is skipped
// when its start/end vectors are empty; relation filtering is skipped when
// rel is empty.
struct InferenceOutputs {
  Eigen::VectorXd sub_start, sub_end;
  Eigen::VectorXd obj_start, obj_end;
  Eigen::VectorXd rel;
  GridFn object_grids_for_subject;
  GridFn subject_grids_for_object;
};

Prediction decode_prediction(const InferenceOutputs& outputs,
                             const DecodeConfig& config);

// Three-stage inference over one sentence: encode, run the unconditional
// heads, then condition the relation-specific taggers on each extracted span
// and union both directions.
Prediction infer(const Example& example, const TokenVocab& vocab,
                 Encoder& encoder, TaggerModel& model,
                 const DecodeConfig& config,
                 const ModelSwitches& switches = ModelSwitches{});

}  // namespace bitag
