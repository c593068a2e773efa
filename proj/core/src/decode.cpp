#include "bitag/decode.hpp"

#include <map>

namespace bitag {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::S2O: return "s2o";
    case Provenance::O2S: return "o2s";
    case Provenance::Both: return "both";
  }
  return "?";
}

std::vector<SpanTriple> Prediction::triple_set() const {
  std::vector<SpanTriple> out;
  out.reserve(triples.size());
  for (const PredictedTriple& t : triples) out.push_back(t.triple);
  return out;
}

std::vector<Span> pair_spans(const Eigen::VectorXd& start_probs,
                             const Eigen::VectorXd& end_probs,
                             double threshold) {
  if (start_probs.size() != end_probs.size())
    throw std::invalid_argument("pair_spans: vector lengths differ");
  std::vector<int> starts, ends;
  for (long i = 0; i < start_probs.size(); ++i) {
    if (start_probs(i) > threshold) starts.push_back(static_cast<int>(i));
    if (end_probs(i) > threshold) ends.push_back(static_cast<int>(i));
  }
  std::vector<bool> used(ends.size(), false);
  std::vector<Span> spans;
  for (int s : starts) {
    for (size_t j = 0; j < ends.size(); ++j) {
      if (used[j] || ends[j] < s) continue;
      used[j] = true;
      spans.push_back(Span{s, ends[j]});
      break;
    }
  }
  return spans;
}

std::vector<std::pair<int, Span>> decode_grids(
    const Eigen::MatrixXd& start_grid, const Eigen::MatrixXd& end_grid,
    double threshold) {
  if (start_grid.rows() != end_grid.rows() ||
      start_grid.cols() != end_grid.cols())
    throw std::invalid_argument("decode_grids: grid shapes differ");
  std::vector<std::pair<int, Span>> out;
  for (long k = 0; k < start_grid.rows(); ++k) {
    for (const Span& sp : pair_spans(start_grid.row(k).transpose(),
                                     end_grid.row(k).transpose(), threshold))
      out.emplace_back(static_cast<int>(k), sp);
  }
  return out;
}

namespace {

void zero_filtered_rows(Eigen::MatrixXd& start, Eigen::MatrixXd& end,
                        const Eigen::VectorXd& rel, double rel_threshold) {
  for (long k = 0; k < start.rows(); ++k) {
    if (rel(k) >= rel_threshold) continue;
    start.row(k).setZero();
    end.row(k).setZero();
  }
}

}  // namespace

Prediction decode_prediction(const InferenceOutputs& outputs,
                             const DecodeConfig& config) {
  const bool filter = config.relation_filter && outputs.rel.size() > 0;
  std::map<SpanTriple, std::pair<bool, bool>> found;  // -> (s2o, o2s)

  if (outputs.sub_start.size() > 0) {
    for (const Span& subject : pair_spans(outputs.sub_start, outputs.sub_end,
                                          config.span_threshold)) {
      auto [gs, ge] = outputs.object_grids_for_subject(subject);
      if (filter) zero_filtered_rows(gs, ge, outputs.rel, config.rel_threshold);
      for (const auto& [rel, object] :
           decode_grids(gs, ge, config.span_threshold))
        found[SpanTriple{subject, object, rel}].first = true;
    }
  }
  if (outputs.obj_start.size() > 0) {
    for (const Span& object : pair_spans(outputs.obj_start, outputs.obj_end,
                                         config.span_threshold)) {
      auto [gs, ge] = outputs.subject_grids_for_object(object);
      if (filter) zero_filtered_rows(gs, ge, outputs.rel, config.rel_threshold);
      for (const auto& [rel, subject] :
           decode_grids(gs, ge, config.span_threshold))
        found[SpanTriple{subject, object, rel}].second = true;
    }
  }

  Prediction prediction;
  for (const auto& [triple, dirs] : found) {
    Provenance p = dirs.first && dirs.second ? Provenance::Both
                   : dirs.first             ? Provenance::S2O
                                            : Provenance::O2S;
    prediction.triples.push_back(PredictedTriple{triple, p});
  }
  return prediction;
}

Prediction infer(const Example& example, const TokenVocab& vocab,
                 Encoder& encoder, TaggerModel& model,
                 const DecodeConfig& config, const ModelSwitches& switches) {
  if (!switches.s2o && !switches.o2s)
    throw ConfigError("infer: both directions disabled");

  nn::Tape tape;
  std::mt19937_64 rng(0);  // inference applies no dropout
  std::vector<int> ids = vocab.encode(example.tokens);
  TokenReps reps = encode_tokens(encoder, tape, ids, false, rng);
  const int r = model.num_relations();

  InferenceOutputs outputs;
  nn::Var p_rel;
  if (switches.relation_prediction) {
    p_rel = model.predict_relations(tape, reps);
    outputs.rel = p_rel.value().row(0).transpose();
  } else {
    p_rel = tape.constant(nn::Matrix::Zero(1, r));
  }

  if (switches.s2o) {
    auto [ps, pe] = model.tag_subjects(tape, reps);
    outputs.sub_start = ps.value().col(0);
    outputs.sub_end = pe.value().col(0);
    outputs.object_grids_for_subject = [&tape, &model, &reps, p_rel](Span sp) {
      auto [gs, ge] = model.tag_objects_given_subject(tape, reps, sp, p_rel);
      return std::make_pair(Eigen::MatrixXd(gs.value().transpose()),
                            Eigen::MatrixXd(ge.value().transpose()));
    };
  }
  if (switches.o2s) {
    auto [ps, pe] = model.tag_objects(tape, reps);
    outputs.obj_start = ps.value().col(0);
    outputs.obj_end = pe.value().col(0);
    outputs.subject_grids_for_object = [&tape, &model, &reps, p_rel](Span sp) {
      auto [gs, ge] = model.tag_subjects_given_object(tape, reps, sp, p_rel);
      return std::make_pair(Eigen::MatrixXd(gs.value().transpose()),
                            Eigen::MatrixXd(ge.value().transpose()));
    };
  }
  return decode_prediction(outputs, config);
}

}  // namespace bitag
