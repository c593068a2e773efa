#include "bitag/corpus.hpp"

#include "testutil.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace bitag;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p);
  out << content;
  return p;
}

Example aligned(const RawExample& raw, const RelationVocab& vocab,
                int max_len = 100, AlignStats* stats = nullptr) {
  return tokenize_align(raw, whitespace_tokenizer(), vocab, max_len, stats);
}

}  // namespace

TEST_CASE("load_dataset parses JSONL records with text and triple_list") {
  auto path = write_temp(
      "bitag_load.jsonl",
      "{\"text\": \"Tom was born in New York at 2000.\", \"triple_list\": "
      "[[\"Tom\",\"birth_place\",\"New York\"],[\"Tom\",\"birth_date\","
      "\"2000\"]]}\n");
  LoadResult r = load_dataset(path, MatchStandard::Partial);
  REQUIRE(r.examples.size() == 1);
  CHECK(r.examples[0].triples.size() == 2);
  CHECK(r.relations.size() == 2);
  CHECK(r.relations.label(0) == "birth_date");  // sorted label order
  CHECK(r.relations.label(1) == "birth_place");
}

TEST_CASE("load_dataset accepts a top-level JSON array") {
  auto path = write_temp(
      "bitag_load_array.json",
      "[{\"text\": \"a b\", \"triple_list\": [[\"a\",\"r\",\"b\"]]},\n"
      " {\"text\": \"c d\", \"triple_list\": [[\"c\",\"r\",\"d\"]]}]\n");
  LoadResult r = load_dataset(path, MatchStandard::Exact);
  CHECK(r.examples.size() == 2);
  CHECK(r.relations.size() == 1);
}

TEST_CASE("load_dataset on an empty file yields empty corpus and vocab") {
  auto path = write_temp("bitag_empty.jsonl", "");
  LoadResult r = load_dataset(path, MatchStandard::Partial);
  CHECK(r.examples.empty());
  CHECK(r.relations.size() == 0);
  CHECK(r.stats.records == 0);
}

TEST_CASE("records with an entity missing from the text are skipped") {
  auto path = write_temp(
      "bitag_missing.jsonl",
      "{\"text\": \"a b c\", \"triple_list\": [[\"a\",\"r\",\"zz\"]]}\n"
      "{\"text\": \"a b c\", \"triple_list\": [[\"a\",\"r\",\"c\"]]}\n");
  LoadResult r = load_dataset(path, MatchStandard::Partial);
  CHECK(r.examples.size() == 1);
  CHECK(r.stats.skipped_examples == 1);
  REQUIRE(r.stats.messages.size() == 1);
  CHECK(r.stats.messages[0].find("zz") != std::string::npos);
}

TEST_CASE("malformed JSON lines are reported with their line number") {
  auto path = write_temp(
      "bitag_corrupt.jsonl",
      "{\"text\": \"a b\", \"triple_list\": [[\"a\",\"r\",\"b\"]]}\n"
      "{not json at all\n"
      "{\"text\": \"c d\", \"triple_list\": [[\"c\",\"r\",\"d\"]]}\n");
  LoadResult r = load_dataset(path, MatchStandard::Partial);
  CHECK(r.examples.size() == 2);
  CHECK(r.stats.parse_errors == 1);
  REQUIRE(!r.stats.messages.empty());
  CHECK(r.stats.messages[0].find("line 2") != std::string::npos);
}

TEST_CASE("whitespace alignment maps entities to covering token spans") {
  auto raws = testutil::reference_batch();
  RelationVocab vocab = testutil::vocab_from(raws);
  Example ex = aligned(raws[0], vocab);

  REQUIRE(ex.tokens.size() == 8);
  CHECK(ex.tokens[4] == "New");
  CHECK(ex.tokens[5] == "York");

  // hand-derived token indices: Tom -> (0,0), "New York" -> (4,5)
  std::set<SpanTriple> triples(ex.triples.begin(), ex.triples.end());
  SpanTriple place{Span{0, 0}, Span{4, 5}, vocab.id("birth_place")};
  SpanTriple date{Span{0, 0}, Span{7, 7}, vocab.id("birth_date")};
  CHECK(triples.count(place) == 1);
  CHECK(triples.count(date) == 1);
}

TEST_CASE("truncation to max_len drops triples beyond the boundary") {
  RawExample raw{"a b c d", {{"a", "r", "d"}}};
  RelationVocab vocab({"r"});
  AlignStats stats;
  Example ex = aligned(raw, vocab, 1, &stats);
  CHECK(ex.tokens.size() == 1);
  CHECK(ex.triples.empty());
  CHECK(stats.triples_dropped == 1);
}

TEST_CASE("entities ground at their first character occurrence") {
  RawExample raw{"Rome guards Rome harbor", {{"Rome", "r", "harbor"}}};
  RelationVocab vocab({"r"});
  Example ex = aligned(raw, vocab);
  REQUIRE(ex.triples.size() == 1);
  CHECK(ex.triples[0].subject == Span{0, 0});
  CHECK(ex.triples[0].object == Span{3, 3});
}

TEST_CASE("entity strings that cross token boundaries cover both tokens") {
  RawExample raw{"the NewYork line", {{"NewYork", "r", "line"}}};
  RelationVocab vocab({"r"});
  Example ex = aligned(raw, vocab);
  REQUIRE(ex.triples.size() == 1);
  CHECK(ex.triples[0].subject == Span{1, 1});
}

TEST_CASE("overlap classification distinguishes Normal, SEO and EPO") {
  auto raws = testutil::reference_batch();
  RelationVocab vocab = testutil::vocab_from(raws);

  Example seo = aligned(raws[0], vocab);
  OverlapFlags f1 = classify_overlap(seo);
  CHECK(f1.seo);
  CHECK(!f1.epo);
  CHECK(!f1.normal);

  Example epo = aligned(raws[1], vocab);
  OverlapFlags f2 = classify_overlap(epo);
  CHECK(f2.epo);
  CHECK(!f2.seo);
  CHECK(!f2.normal);

  RawExample single{"a x b", {{"a", "born_in", "b"}}};
  RelationVocab v2({"born_in"});
  OverlapFlags f3 = classify_overlap(aligned(single, v2));
  CHECK(f3.normal);
  CHECK(!f3.seo);
  CHECK(!f3.epo);

  CHECK_THROWS_AS(classify_overlap(Example{}), std::invalid_argument);
}

TEST_CASE("a sentence can be both SEO and EPO") {
  RawExample raw{"a x b y c",
                 {{"a", "r1", "b"}, {"a", "r2", "b"}, {"a", "r1", "c"}}};
  RelationVocab vocab({"r1", "r2"});
  OverlapFlags f = classify_overlap(aligned(raw, vocab));
  CHECK(f.epo);
  CHECK(f.seo);
  CHECK(!f.normal);
}

TEST_CASE("category partition: Normal is disjoint from SEO and EPO") {
  auto raws = testutil::synthetic_raw_corpus({.sentences = 60, .seed = 3});
  Corpus corpus = testutil::prepared(raws, MatchStandard::Exact);
  for (const Example& ex : corpus.examples) {
    if (ex.triples.empty()) continue;
    CHECK((ex.overlap.normal || ex.overlap.seo || ex.overlap.epo));
    if (ex.overlap.normal) CHECK((!ex.overlap.seo && !ex.overlap.epo));
  }
}

TEST_CASE("gold tensors mark starts, ends and relation labels") {
  auto raws = testutil::reference_batch();
  RelationVocab vocab = testutil::vocab_from(raws);
  Example ex = aligned(raws[0], vocab);
  TagTensors g = build_gold_tensors(ex, vocab.size());

  const long l = static_cast<long>(ex.tokens.size());
  REQUIRE(g.sub_start.size() == l);
  CHECK(g.sub_start(0) == 1.0);
  CHECK(g.sub_start.sum() == 1.0);  // only Tom
  CHECK(g.sub_end(0) == 1.0);
  CHECK(g.rel_labels(vocab.id("birth_place")) == 1.0);
  CHECK(g.rel_labels(vocab.id("birth_date")) == 1.0);
  CHECK(g.rel_labels.sum() == 2.0);

  // one object grid conditioned on Tom, with both objects marked
  REQUIRE(g.per_subject.size() == 1);
  CHECK(g.per_subject[0].span == Span{0, 0});
  CHECK(g.per_subject[0].start(vocab.id("birth_place"), 4) == 1.0);
  CHECK(g.per_subject[0].end(vocab.id("birth_place"), 5) == 1.0);
  CHECK(g.per_subject[0].start(vocab.id("birth_date"), 7) == 1.0);
  CHECK(g.per_subject[0].start.sum() == 2.0);
}

TEST_CASE("EPO gold grids mark the same span under two relation rows") {
  auto raws = testutil::reference_batch();
  RelationVocab vocab = testutil::vocab_from(raws);
  Example ex = aligned(raws[1], vocab);
  TagTensors g = build_gold_tensors(ex, vocab.size());

  REQUIRE(g.per_subject.size() == 1);  // London
  const ConditionedGold& grid = g.per_subject[0];
  int england_start = ex.triples[0].object.start;
  CHECK(grid.start(vocab.id("capital_of"), england_start) == 1.0);
  CHECK(grid.start(vocab.id("belong_to"), england_start) == 1.0);

  // o2s grid conditioned on England maps back to London under both rows
  REQUIRE(g.per_object.size() == 1);
  CHECK(g.per_object[0].start(vocab.id("capital_of"), 0) == 1.0);
  CHECK(g.per_object[0].start(vocab.id("belong_to"), 0) == 1.0);
}

TEST_CASE("an example without triples produces all-zero tensors") {
  RawExample raw{"just plain words", {}};
  RelationVocab vocab({"r"});
  TagTensors g = build_gold_tensors(aligned(raw, vocab), 1);
  CHECK(g.sub_start.sum() == 0.0);
  CHECK(g.obj_end.sum() == 0.0);
  CHECK(g.rel_labels.sum() == 0.0);
  CHECK(g.per_subject.empty());
  CHECK(g.per_object.empty());
}

TEST_CASE("prepare_corpus aggregates stats over the corpus") {
  auto raws = testutil::synthetic_raw_corpus(
      {.sentences = 20, .relations = 3, .seed = 11});
  PrepareResult pr =
      prepare_corpus(raws, testutil::vocab_from(raws), MatchStandard::Exact,
                     100, nullptr);
  CHECK(pr.stats.sentences == 20);
  long triples = 0;
  for (const Example& ex : pr.corpus.examples)
    triples += static_cast<long>(ex.triples.size());
  CHECK(pr.stats.triples == triples);
  long bucket_total = 0;
  for (long b : pr.stats.buckets) bucket_total += b;
  CHECK(bucket_total + pr.stats.unclassified == pr.stats.sentences);
}

TEST_CASE("corpus JSON round-trips examples, spans and flags") {
  auto raws = testutil::synthetic_raw_corpus(
      {.sentences = 8, .relations = 3, .seed = 5, .include_reference = true});
  PrepareResult pr = prepare_corpus(raws, testutil::vocab_from(raws),
                                    MatchStandard::Partial, 64, nullptr);
  std::string text = corpus_to_json(pr.corpus, pr.stats, "{}");
  Corpus back = corpus_from_json(text);
  REQUIRE(back.examples.size() == pr.corpus.examples.size());
  CHECK(back.relations == pr.corpus.relations);
  CHECK(back.standard == MatchStandard::Partial);
  CHECK(back.max_len == 64);
  for (size_t i = 0; i < back.examples.size(); ++i) {
    CHECK(back.examples[i].tokens == pr.corpus.examples[i].tokens);
    CHECK(back.examples[i].triples == pr.corpus.examples[i].triples);
    CHECK(back.examples[i].overlap.seo == pr.corpus.examples[i].overlap.seo);
  }
  CHECK_THROWS_AS(corpus_from_json("{\"format\": \"other\"}"), DataError);
}

TEST_CASE("triple-count buckets clamp at five") {
  Example ex;
  ex.tokens = {"a"};
  ex.offsets = {{0, 1}};
  CHECK(ex.bucket() == 0);
  for (int k = 0; k < 7; ++k)
    ex.triples.push_back(SpanTriple{Span{0, 0}, Span{0, 0}, k});
  CHECK(ex.bucket() == 5);
}
