#include "bitag/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace bitag {

using nlohmann::json;

MatchStandard parse_match_standard(const std::string& name) {
  if (name == "partial") return MatchStandard::Partial;
  if (name == "exact") return MatchStandard::Exact;
  throw ConfigError("unknown match standard: " + name);
}

std::string to_string(MatchStandard standard) {
  return standard == MatchStandard::Partial ? "partial" : "exact";
}

int Example::bucket() const {
  if (triples.empty()) return 0;
  return std::min<int>(static_cast<int>(triples.size()), 5);
}

std::string Example::span_text(Span span) const {
  if (span.start < 0 || span.end >= static_cast<int>(tokens.size()) ||
      span.start > span.end)
    throw std::invalid_argument("span_text: span out of range");
  int begin = offsets[span.start].first;
  int end = offsets[span.end].second;
  return text.substr(begin, end - begin);
}

RelationVocab::RelationVocab(std::vector<std::string> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  labels_ = std::move(labels);
  for (size_t i = 0; i < labels_.size(); ++i)
    ids_.emplace(labels_[i], static_cast<int>(i));
}

int RelationVocab::id(std::string_view label) const {
  auto it = ids_.find(label);
  if (it == ids_.end())
    throw DataError("unknown relation label: " + std::string(label));
  return it->second;
}

bool RelationVocab::contains(std::string_view label) const {
  return ids_.find(label) != ids_.end();
}

const std::string& RelationVocab::label(int id) const {
  if (id < 0 || id >= size())
    throw DataError("relation id out of range: " + std::to_string(id));
  return labels_[static_cast<size_t>(id)];
}

Tokenizer whitespace_tokenizer() {
  return [](const std::string& text) {
    std::vector<Token> tokens;
    size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() &&
             std::isspace(static_cast<unsigned char>(text[i])))
        ++i;
      if (i >= text.size()) break;
      size_t j = i;
      while (j < text.size() &&
             !std::isspace(static_cast<unsigned char>(text[j])))
        ++j;
      tokens.push_back(Token{text.substr(i, j - i), static_cast<int>(i),
                             static_cast<int>(j)});
      i = j;
    }
    return tokens;
  };
}

namespace {

struct RecordError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RawExample parse_record(const json& j) {
  if (!j.is_object()) throw RecordError("record is not a JSON object");
  if (!j.contains("text") || !j["text"].is_string())
    throw RecordError("missing string field 'text'");
  RawExample raw;
  raw.text = j["text"].get<std::string>();
  if (raw.text.empty()) throw RecordError("empty 'text'");
  if (!j.contains("triple_list") || !j["triple_list"].is_array())
    throw RecordError("missing array field 'triple_list'");
  for (const json& t : j["triple_list"]) {
    if (!t.is_array() || t.size() != 3 || !t[0].is_string() ||
        !t[1].is_string() || !t[2].is_string())
      throw RecordError("triple is not [subject, relation, object]");
    raw.triples.push_back(RawTriple{t[0].get<std::string>(),
                                    t[1].get<std::string>(),
                                    t[2].get<std::string>()});
  }
  return raw;
}

// Accepts a record if every entity occurs verbatim in the text.
bool entities_present(const RawExample& raw, std::string* missing) {
  for (const RawTriple& t : raw.triples) {
    if (raw.text.find(t.subject) == std::string::npos) {
      *missing = t.subject;
      return false;
    }
    if (raw.text.find(t.object) == std::string::npos) {
      *missing = t.object;
      return false;
    }
  }
  return true;
}

}  // namespace

LoadResult load_dataset(const std::filesystem::path& path,
                        MatchStandard /*standard*/) {
  std::string content = read_text_file(path);
  LoadResult result;
  std::vector<std::string> labels;

  auto consume = [&](const json& j, const std::string& where) {
    ++result.stats.records;
    RawExample raw;
    try {
      raw = parse_record(j);
    } catch (const RecordError& e) {
      ++result.stats.parse_errors;
      result.stats.messages.push_back(where + ": " + e.what());
      return;
    }
    for (const RawTriple& t : raw.triples) labels.push_back(t.relation);
    std::string missing;
    if (!entities_present(raw, &missing)) {
      ++result.stats.skipped_examples;
      result.stats.messages.push_back(where + ": entity not found in text: " +
                                      missing);
      return;
    }
    result.examples.push_back(std::move(raw));
  };

  size_t first = content.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    // empty file -> empty corpus, empty vocabulary
    return result;
  }

  if (content[first] == '[') {
    json root;
    try {
      root = json::parse(content);
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": malformed JSON array: " + e.what());
    }
    long index = 0;
    for (const json& j : root) consume(j, "record " + std::to_string(index++));
  } else {
    std::istringstream in(content);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        ++result.stats.records;
        ++result.stats.parse_errors;
        result.stats.messages.push_back("line " + std::to_string(line_no) +
                                        ": " + e.what());
        continue;
      }
      consume(j, "line " + std::to_string(line_no));
    }
  }

  result.relations = RelationVocab(std::move(labels));
  return result;
}

namespace {

// Minimal contiguous token cover of the char range [begin, end); returns
// false if the range is not covered by the (possibly truncated) token list.
bool char_range_to_span(const std::vector<std::pair<int, int>>& offsets,
                        int begin, int end, Span* out) {
  int first = -1, last = -1;
  for (size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i].second > begin && offsets[i].first < end) {
      if (first < 0) first = static_cast<int>(i);
      last = static_cast<int>(i);
    }
  }
  if (first < 0) return false;
  // reject when the entity extends past the last kept token
  if (offsets[static_cast<size_t>(last)].second < end &&
      last + 1 == static_cast<int>(offsets.size()))
    return false;
  *out = Span{first, last};
  return true;
}

}  // namespace

Example tokenize_align(const RawExample& raw, const Tokenizer& tokenizer,
                       const RelationVocab& relations, int max_len,
                       AlignStats* stats) {
  if (max_len < 1) throw std::invalid_argument("tokenize_align: max_len < 1");
  Example ex;
  ex.text = raw.text;
  std::vector<Token> tokens = tokenizer(raw.text);
  bool truncated = tokens.size() > static_cast<size_t>(max_len);
  if (truncated) tokens.resize(static_cast<size_t>(max_len));
  for (const Token& t : tokens) {
    ex.tokens.push_back(t.text);
    ex.offsets.emplace_back(t.begin, t.end);
  }

  std::set<SpanTriple> unique;
  for (const RawTriple& t : raw.triples) {
    int rel = relations.id(t.relation);
    size_t spos = raw.text.find(t.subject);
    size_t opos = raw.text.find(t.object);
    Span subj{}, obj{};
    bool ok = spos != std::string::npos && opos != std::string::npos &&
              char_range_to_span(ex.offsets, static_cast<int>(spos),
                                 static_cast<int>(spos + t.subject.size()),
                                 &subj) &&
              char_range_to_span(ex.offsets, static_cast<int>(opos),
                                 static_cast<int>(opos + t.object.size()),
                                 &obj);
    if (!ok) {
      if (stats) {
        ++stats->triples_dropped;
        stats->messages.push_back("dropped triple (" + t.subject + ", " +
                                  t.relation + ", " + t.object +
                                  "): span unavailable" +
                                  (truncated ? " after truncation" : ""));
      }
      continue;
    }
    unique.insert(SpanTriple{subj, obj, rel});
  }
  ex.triples.assign(unique.begin(), unique.end());
  return ex;
}

OverlapFlags classify_overlap(const Example& example) {
  if (example.triples.empty())
    throw std::invalid_argument("classify_overlap: example has no triples");

  using Pair = std::pair<Span, Span>;
  std::map<Pair, int> pair_count;
  for (const SpanTriple& t : example.triples)
    ++pair_count[{t.subject, t.object}];

  OverlapFlags flags;
  for (const auto& [pair, count] : pair_count)
    if (count >= 2) flags.epo = true;

  // SEO: an entity span shared across at least two distinct entity pairs.
  std::map<Span, std::set<Pair>> span_pairs;
  for (const auto& [pair, count] : pair_count) {
    span_pairs[pair.first].insert(pair);
    span_pairs[pair.second].insert(pair);
  }
  for (const auto& [span, pairs] : span_pairs)
    if (pairs.size() >= 2) flags.seo = true;

  flags.normal = !flags.seo && !flags.epo;
  return flags;
}

TagTensors build_gold_tensors(const Example& example, int num_relations) {
  const long l = static_cast<long>(example.tokens.size());
  const long r = num_relations;
  TagTensors g;
  g.sub_start = Eigen::VectorXd::Zero(l);
  g.sub_end = Eigen::VectorXd::Zero(l);
  g.obj_start = Eigen::VectorXd::Zero(l);
  g.obj_end = Eigen::VectorXd::Zero(l);
  g.rel_labels = Eigen::VectorXd::Zero(r);

  std::set<Span> subjects, objects;
  for (const SpanTriple& t : example.triples) {
    if (t.subject.start < 0 || t.subject.end >= l || t.object.start < 0 ||
        t.object.end >= l || t.relation < 0 || t.relation >= r)
      throw std::invalid_argument("build_gold_tensors: triple out of range");
    g.sub_start(t.subject.start) = 1.0;
    g.sub_end(t.subject.end) = 1.0;
    g.obj_start(t.object.start) = 1.0;
    g.obj_end(t.object.end) = 1.0;
    g.rel_labels(t.relation) = 1.0;
    subjects.insert(t.subject);
    objects.insert(t.object);
  }

  for (const Span& s : subjects) {
    ConditionedGold cg{s, Eigen::MatrixXd::Zero(r, l),
                       Eigen::MatrixXd::Zero(r, l)};
    for (const SpanTriple& t : example.triples) {
      if (t.subject != s) continue;
      cg.start(t.relation, t.object.start) = 1.0;
      cg.end(t.relation, t.object.end) = 1.0;
    }
    g.per_subject.push_back(std::move(cg));
  }
  for (const Span& o : objects) {
    ConditionedGold cg{o, Eigen::MatrixXd::Zero(r, l),
                       Eigen::MatrixXd::Zero(r, l)};
    for (const SpanTriple& t : example.triples) {
      if (t.object != o) continue;
      cg.start(t.relation, t.subject.start) = 1.0;
      cg.end(t.relation, t.subject.end) = 1.0;
    }
    g.per_object.push_back(std::move(cg));
  }
  return g;
}

PrepareResult prepare_corpus(const std::vector<RawExample>& raws,
                             const RelationVocab& relations,
                             MatchStandard standard, int max_len,
                             const LoadStats* load_stats) {
  PrepareResult out;
  out.corpus.relations = relations;
  out.corpus.standard = standard;
  out.corpus.max_len = max_len;

  Tokenizer tok = whitespace_tokenizer();
  AlignStats align;
  for (const RawExample& raw : raws) {
    Example ex = tokenize_align(raw, tok, relations, max_len, &align);
    if (!ex.triples.empty()) ex.overlap = classify_overlap(ex);
    out.corpus.examples.push_back(std::move(ex));
  }

  CorpusStats& s = out.stats;
  s.sentences = static_cast<long>(out.corpus.examples.size());
  s.triples_dropped = align.triples_dropped;
  if (load_stats) {
    s.parse_errors = load_stats->parse_errors;
    s.skipped_examples = load_stats->skipped_examples;
  }
  for (const Example& ex : out.corpus.examples) {
    s.triples += static_cast<long>(ex.triples.size());
    if (ex.triples.empty()) {
      ++s.unclassified;
      continue;
    }
    if (ex.overlap.normal) ++s.normal;
    if (ex.overlap.seo) ++s.seo;
    if (ex.overlap.epo) ++s.epo;
    ++s.buckets[static_cast<size_t>(ex.bucket() - 1)];
  }
  return out;
}

PrepareResult prepare_corpus(const std::filesystem::path& path,
                             MatchStandard standard, int max_len) {
  LoadResult loaded = load_dataset(path, standard);
  return prepare_corpus(loaded.examples, loaded.relations, standard, max_len,
                        &loaded.stats);
}

namespace {

json stats_json(const CorpusStats& s) {
  return json{{"sentences", s.sentences},
              {"parse_errors", s.parse_errors},
              {"skipped_examples", s.skipped_examples},
              {"triples", s.triples},
              {"triples_dropped", s.triples_dropped},
              {"unclassified", s.unclassified},
              {"overlap", json{{"normal", s.normal},
                               {"seo", s.seo},
                               {"epo", s.epo}}},
              {"buckets", json{{"1", s.buckets[0]},
                               {"2", s.buckets[1]},
                               {"3", s.buckets[2]},
                               {"4", s.buckets[3]},
                               {"5+", s.buckets[4]}}}};
}

}  // namespace

std::string stats_to_json(const CorpusStats& stats,
                          const std::string& config_json) {
  json j = stats_json(stats);
  j["config"] = json::parse(config_json);
  return j.dump(2);
}

std::string corpus_to_json(const Corpus& corpus, const CorpusStats& stats,
                           const std::string& config_json) {
  json j;
  j["format"] = "bitag.corpus.v1";
  j["config"] = json::parse(config_json);
  j["match_standard"] = to_string(corpus.standard);
  j["max_len"] = corpus.max_len;
  j["relations"] = corpus.relations.labels();
  j["stats"] = stats_json(stats);
  json examples = json::array();
  for (const Example& ex : corpus.examples) {
    json e;
    e["text"] = ex.text;
    e["tokens"] = ex.tokens;
    json offs = json::array();
    for (const auto& [b, en] : ex.offsets) offs.push_back(json::array({b, en}));
    e["offsets"] = std::move(offs);
    json triples = json::array();
    for (const SpanTriple& t : ex.triples)
      triples.push_back(
          json{{"subject", json::array({t.subject.start, t.subject.end})},
               {"relation", t.relation},
               {"object", json::array({t.object.start, t.object.end})}});
    e["triples"] = std::move(triples);
    e["overlap"] = json{{"normal", ex.overlap.normal},
                        {"seo", ex.overlap.seo},
                        {"epo", ex.overlap.epo}};
    examples.push_back(std::move(e));
  }
  j["examples"] = std::move(examples);
  return j.dump();
}

Corpus corpus_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("corpus file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "bitag.corpus.v1")
    throw DataError("corpus file is missing the bitag.corpus.v1 format tag");

  Corpus corpus;
  corpus.standard = parse_match_standard(j["match_standard"].get<std::string>());
  corpus.max_len = j["max_len"].get<int>();
  corpus.relations =
      RelationVocab(j["relations"].get<std::vector<std::string>>());
  for (const json& e : j["examples"]) {
    Example ex;
    ex.text = e["text"].get<std::string>();
    ex.tokens = e["tokens"].get<std::vector<std::string>>();
    for (const json& o : e["offsets"])
      ex.offsets.emplace_back(o[0].get<int>(), o[1].get<int>());
    for (const json& t : e["triples"]) {
      SpanTriple st;
      st.subject = Span{t["subject"][0].get<int>(), t["subject"][1].get<int>()};
      st.object = Span{t["object"][0].get<int>(), t["object"][1].get<int>()};
      st.relation = t["relation"].get<int>();
      ex.triples.push_back(st);
    }
    const json& ov = e["overlap"];
    ex.overlap = OverlapFlags{ov["normal"].get<bool>(), ov["seo"].get<bool>(),
                              ov["epo"].get<bool>()};
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

void save_text_file(const std::filesystem::path& path,
                    const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace bitag
