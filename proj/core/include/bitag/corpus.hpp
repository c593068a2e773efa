#pragma once

#include "bitag/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bitag {

struct RawTriple {
  std::string subject;
  std::string relation;
  std::string object;
};

// One dataset record as read from disk, before token alignment.
struct RawExample {
  std::string text;
  std::vector<RawTriple> triples;
};

// Non-exclusive overlap classes. A sentence can be both SEO and EPO;
// Normal excludes both.
struct OverlapFlags {
  bool normal = false;
  bool seo = false;
  bool epo = false;
};

struct Example {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<std::pair<int, int>> offsets;  // [begin, end) chars per token
  std::vector<SpanTriple> triples;           // deduplicated, sorted
  OverlapFlags overlap;

  // Triple-count bucket 1..5 (5 meaning "5 or more"); 0 when no triples.
  int bucket() const;
  std::string span_text(Span span) const;
};

class RelationVocab {
 public:
  RelationVocab() = default;
  // Labels are sorted and deduplicated so ids are stable across runs.
  explicit RelationVocab(std::vector<std::string> labels);

  int id(std::string_view label) const;  // throws DataError when unknown
  bool contains(std::string_view label) const;
  const std::string& label(int id) const;
  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }
  bool operator==(const RelationVocab& other) const {
    return labels_ == other.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, int, std::less<>> ids_;
};

struct Token {
  std::string text;
  int begin = 0;
  int end = 0;  // [begin, end) char range
};

using Tokenizer = std::function<std::vector<Token>(const std::string&)>;

// Splits on runs of ASCII whitespace; offsets index into the original text.
Tokenizer whitespace_tokenizer();

struct LoadStats {
  long records = 0;           // records seen, including rejected ones
  long parse_errors = 0;      // malformed JSON lines / records
  long skipped_examples = 0;  // entity string absent from text
  std::vector<std::string> messages;
};

struct LoadResult {
  std::vector<RawExample> examples;
  RelationVocab relations;
  LoadStats stats;
};

// Reads a dataset file: either JSON lines or a top-level JSON array, each
// record carrying `text` and `triple_list` ([subject, relation, object]
// string triples). The match standard does not change parsing; the two
// annotation standards share one shape.
LoadResult load_dataset(const std::filesystem::path& path,
                        MatchStandard standard);

struct AlignStats {
  long triples_dropped = 0;
  std::vector<std::string> messages;
};

// Grounds entity strings at their first character occurrence and maps them to
// covering token spans. Sentences are truncated to max_len tokens; triples
// with a span beyond the boundary are dropped and counted.
Example tokenize_align(const RawExample& raw, const Tokenizer& tokenizer,
                       const RelationVocab& relations, int max_len,
                       AlignStats* stats = nullptr);

// Overlap-pattern classification. Requires at least one triple.
OverlapFlags classify_overlap(const Example& example);

// Gold grids conditioned on one subject (or object) span: rows index
// relations, columns index tokens.
struct ConditionedGold {
  Span span;
  Eigen::MatrixXd start;
  Eigen::MatrixXd end;
};

struct TagTensors {
  Eigen::VectorXd sub_start, sub_end;  // length l
  Eigen::VectorXd obj_start, obj_end;
  Eigen::VectorXd rel_labels;  // length r
  std::vector<ConditionedGold> per_subject;  // object grids per gold subject
  std::vector<ConditionedGold> per_object;   // subject grids per gold object
};

TagTensors build_gold_tensors(const Example& example, int num_relations);

struct Corpus {
  std::vector<Example> examples;
  RelationVocab relations;
  MatchStandard standard = MatchStandard::Partial;
  int max_len = 100;
};

struct CorpusStats {
  long sentences = 0;
  long parse_errors = 0;
  long skipped_examples = 0;
  long triples = 0;
  long triples_dropped = 0;
  long unclassified = 0;  // sentences left with zero aligned triples
  long normal = 0, seo = 0, epo = 0;
  std::array<long, 5> buckets{};  // N=1..4 and N>=5
};

struct PrepareResult {
  Corpus corpus;
  CorpusStats stats;
};

// load + tokenize/align + classify, the data path behind `prepare`.
PrepareResult prepare_corpus(const std::filesystem::path& path,
                             MatchStandard standard, int max_len);
PrepareResult prepare_corpus(const std::vector<RawExample>& raws,
                             const RelationVocab& relations,
                             MatchStandard standard, int max_len,
                             const LoadStats* load_stats = nullptr);

std::string corpus_to_json(const Corpus& corpus, const CorpusStats& stats,
                           const std::string& config_json);
Corpus corpus_from_json(const std::string& text);
std::string stats_to_json(const CorpusStats& stats,
                          const std::string& config_json);

void save_text_file(const std::filesystem::path& path,
                    const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace bitag
