#pragma once

#include "bitag/corpus.hpp"
#include "bitag/types.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace bitag {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long pred = 0;
  long gold = 0;
};

// Partial match: relation and both entity start indices (heads) agree.
// Exact match: relation and both full spans agree.
bool match_triple(const SpanTriple& pred, const SpanTriple& gold,
                  MatchStandard standard);

// Micro-averaged over triples; inputs are per-sentence triple sets. Each gold
// triple can be credited to at most one prediction.
PRF micro_prf(std::span<const std::vector<SpanTriple>> preds,
              std::span<const std::vector<SpanTriple>> golds,
              MatchStandard standard);

struct CategoryScore {
  long support = 0;  // sentences in the category
  PRF prf;
};

struct EvalReport {
  MatchStandard standard = MatchStandard::Partial;
  PRF overall;
  std::map<std::string, CategoryScore> by_overlap;  // Normal / SEO / EPO
  std::map<std::string, CategoryScore> by_count;    // "1".."4", "5+"
};

// Scores predictions sentence-by-sentence against the corpus gold triples and
// breaks results down by overlap class and triple-count bucket. A sentence in
// both SEO and EPO contributes to both rows.
EvalReport report(std::span<const std::vector<SpanTriple>> preds,
                  std::span<const Example> corpus, MatchStandard standard);

std::string render_report_table(const EvalReport& report);
std::string report_to_json(const EvalReport& report,
                           const std::string& config_json);

}  // namespace bitag
