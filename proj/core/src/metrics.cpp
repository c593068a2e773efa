#include "bitag/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

namespace bitag {

using nlohmann::json;

bool match_triple(const SpanTriple& pred, const SpanTriple& gold,
                  MatchStandard standard) {
  if (pred.relation != gold.relation) return false;
  if (standard == MatchStandard::Exact)
    return pred.subject == gold.subject && pred.object == gold.object;
  return pred.subject.start == gold.subject.start &&
         pred.object.start == gold.object.start;
}

namespace {

PRF finish(long tp, long pred, long gold) {
  PRF out;
  out.tp = tp;
  out.pred = pred;
  out.gold = gold;
  out.precision = pred > 0 ? static_cast<double>(tp) / pred : 0.0;
  out.recall = gold > 0 ? static_cast<double>(tp) / gold : 0.0;
  out.f1 = (out.precision + out.recall) > 0
               ? 2.0 * out.precision * out.recall /
                     (out.precision + out.recall)
               : 0.0;
  return out;
}

long sentence_tp(const std::vector<SpanTriple>& preds,
                 const std::vector<SpanTriple>& golds,
                 MatchStandard standard) {
  std::vector<bool> taken(golds.size(), false);
  long tp = 0;
  for (const SpanTriple& p : preds) {
    for (size_t g = 0; g < golds.size(); ++g) {
      if (taken[g] || !match_triple(p, golds[g], standard)) continue;
      taken[g] = true;
      ++tp;
      break;
    }
  }
  return tp;
}

std::vector<SpanTriple> dedup(const std::vector<SpanTriple>& v) {
  std::set<SpanTriple> s(v.begin(), v.end());
  return {s.begin(), s.end()};
}

}  // namespace

PRF micro_prf(std::span<const std::vector<SpanTriple>> preds,
              std::span<const std::vector<SpanTriple>> golds,
              MatchStandard standard) {
  if (preds.size() != golds.size())
    throw std::invalid_argument("micro_prf: sentence counts differ");
  long tp = 0, np = 0, ng = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    std::vector<SpanTriple> p = dedup(preds[i]);
    std::vector<SpanTriple> g = dedup(golds[i]);
    tp += sentence_tp(p, g, standard);
    np += static_cast<long>(p.size());
    ng += static_cast<long>(g.size());
  }
  return finish(tp, np, ng);
}

EvalReport report(std::span<const std::vector<SpanTriple>> preds,
                  std::span<const Example> corpus, MatchStandard standard) {
  if (preds.size() != corpus.size())
    throw std::invalid_argument("report: prediction/corpus size mismatch");

  EvalReport rep;
  rep.standard = standard;

  std::vector<std::vector<SpanTriple>> golds;
  golds.reserve(corpus.size());
  for (const Example& ex : corpus) golds.push_back(ex.triples);
  rep.overall = micro_prf(preds, golds, standard);

  auto subset_score = [&](auto accept) {
    CategoryScore cs;
    std::vector<std::vector<SpanTriple>> sp, sg;
    for (size_t i = 0; i < corpus.size(); ++i) {
      if (!accept(corpus[i])) continue;
      sp.push_back(preds[i]);
      sg.push_back(golds[i]);
    }
    cs.support = static_cast<long>(sp.size());
    if (cs.support > 0) cs.prf = micro_prf(sp, sg, standard);
    return cs;
  };

  rep.by_overlap["Normal"] =
      subset_score([](const Example& e) { return e.overlap.normal; });
  rep.by_overlap["SEO"] =
      subset_score([](const Example& e) { return e.overlap.seo; });
  rep.by_overlap["EPO"] =
      subset_score([](const Example& e) { return e.overlap.epo; });

  const char* names[5] = {"1", "2", "3", "4", "5+"};
  for (int b = 1; b <= 5; ++b)
    rep.by_count[names[b - 1]] =
        subset_score([b](const Example& e) { return e.bucket() == b; });
  return rep;
}

std::string render_report_table(const EvalReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  auto row = [&](const std::string& name, long support, const PRF* prf) {
    out << std::left << std::setw(10) << name << std::right << std::setw(9)
        << support;
    if (prf)
      out << std::setw(10) << prf->precision << std::setw(10) << prf->recall
          << std::setw(10) << prf->f1;
    else
      out << std::setw(10) << "-" << std::setw(10) << "-" << std::setw(10)
          << "-";
    out << "\n";
  };
  out << std::left << std::setw(10) << "category" << std::right << std::setw(9)
      << "support" << std::setw(10) << "prec" << std::setw(10) << "rec"
      << std::setw(10) << "f1" << "\n";
  row("overall", report.overall.gold, &report.overall);
  for (const char* name : {"Normal", "SEO", "EPO"}) {
    const CategoryScore& cs = report.by_overlap.at(name);
    row(name, cs.support, cs.support > 0 ? &cs.prf : nullptr);
  }
  for (const char* name : {"1", "2", "3", "4", "5+"}) {
    const CategoryScore& cs = report.by_count.at(name);
    row(std::string("N=") + name, cs.support,
        cs.support > 0 ? &cs.prf : nullptr);
  }
  return out.str();
}

namespace {

json prf_json(const PRF& prf) {
  return json{{"precision", prf.precision}, {"recall", prf.recall},
              {"f1", prf.f1},               {"tp", prf.tp},
              {"pred", prf.pred},           {"gold", prf.gold}};
}

json category_json(const CategoryScore& cs) {
  json j{{"support", cs.support}};
  if (cs.support > 0) j["score"] = prf_json(cs.prf);
  return j;
}

}  // namespace

std::string report_to_json(const EvalReport& report,
                           const std::string& config_json) {
  json j;
  j["config"] = json::parse(config_json);
  j["standard"] = to_string(report.standard);
  j["overall"] = prf_json(report.overall);
  for (const auto& [name, cs] : report.by_overlap)
    j["by_overlap"][name] = category_json(cs);
  for (const auto& [name, cs] : report.by_count)
    j["by_count"][name] = category_json(cs);
  return j.dump(2);
}

}  // namespace bitag
