#include "bitag/contrastive.hpp"

#include <array>
#include <map>
#include <set>
#include <stdexcept>

namespace bitag {

using nn::Tape;
using nn::Var;

std::vector<ContrastiveGroup> build_groups(
    Tape& tape, std::span<const Example* const> examples,
    std::span<const DualViews> views, AnchorRole role) {
  if (examples.size() != views.size())
    throw std::invalid_argument("build_groups: examples/views size mismatch");

  const size_t n = examples.size();
  // Distinct entity spans per example and their embeddings in both views.
  std::vector<std::vector<Span>> entities(n);
  std::vector<std::array<std::map<Span, Var>, 2>> embeddings(n);
  for (size_t e = 0; e < n; ++e) {
    std::set<Span> spans;
    for (const SpanTriple& t : examples[e]->triples) {
      spans.insert(t.subject);
      spans.insert(t.object);
    }
    entities[e].assign(spans.begin(), spans.end());
    const long l = views[e].a.rows();
    TokenReps view_a{views[e].a, std::vector<int>(l, 1)};
    TokenReps view_b{views[e].b, std::vector<int>(l, 1)};
    for (const Span& s : entities[e]) {
      embeddings[e][0].emplace(s, span_embed(tape, view_a, s));
      embeddings[e][1].emplace(s, span_embed(tape, view_b, s));
    }
  }

  std::vector<ContrastiveGroup> groups;
  for (size_t e = 0; e < n; ++e) {
    // anchor span -> related partner spans, in the requested role sense
    std::map<Span, std::set<Span>> related;
    for (const SpanTriple& t : examples[e]->triples) {
      if (role == AnchorRole::Subject)
        related[t.subject].insert(t.object);
      else
        related[t.object].insert(t.subject);
    }
    for (const auto& [anchor_span, partners] : related) {
      for (int v = 0; v < 2; ++v) {
        ContrastiveGroup g;
        g.anchor = embeddings[e][static_cast<size_t>(v)].at(anchor_span);
        for (const Span& p : partners) {
          if (p == anchor_span) continue;  // self-related span: both copies
                                           // stay out of the pool
          g.positives.push_back(embeddings[e][0].at(p));
          g.positives.push_back(embeddings[e][1].at(p));
        }
        if (g.positives.empty()) continue;
        for (size_t e2 = 0; e2 < n; ++e2) {
          for (const Span& s2 : entities[e2]) {
            if (e2 == e && s2 == anchor_span) continue;
            if (e2 == e && partners.count(s2)) continue;
            g.negatives.push_back(embeddings[e2][0].at(s2));
            g.negatives.push_back(embeddings[e2][1].at(s2));
          }
        }
        groups.push_back(std::move(g));
      }
    }
  }
  return groups;
}

namespace {

std::vector<Var> scaled_similarities(Tape& tape, const ContrastiveGroup& group,
                                     std::span<const Var> others, double tau) {
  std::vector<Var> sims;
  sims.reserve(others.size());
  for (const Var& v : others)
    sims.push_back(tape.scale(tape.cosine_similarity(group.anchor, v),
                              1.0 / tau));
  return sims;
}

}  // namespace

Var loss_l1(Tape& tape, const ContrastiveGroup& group, double tau) {
  if (group.positives.empty())
    throw std::invalid_argument("loss_l1: group has no positives");
  if (tau <= 0.0) throw std::invalid_argument("loss_l1: tau must be positive");

  std::vector<Var> pos = scaled_similarities(tape, group, group.positives, tau);
  std::vector<Var> all = pos;
  std::vector<Var> neg = scaled_similarities(tape, group, group.negatives, tau);
  all.insert(all.end(), neg.begin(), neg.end());

  Var lse_pos = tape.logsumexp_col(tape.stack_scalars(pos));
  Var lse_all = tape.logsumexp_col(tape.stack_scalars(all));
  return tape.scale(tape.sub(lse_all, lse_pos),
                    1.0 / static_cast<double>(group.positives.size()));
}

Var loss_l2(Tape& tape, const ContrastiveGroup& group, double tau,
            double beta) {
  if (group.positives.empty())
    throw std::invalid_argument("loss_l2: group has no positives");
  if (tau <= 0.0) throw std::invalid_argument("loss_l2: tau must be positive");
  if (group.negatives.empty()) return tape.constant(nn::Matrix::Zero(1, 1));

  // mean positive similarity (unscaled)
  std::vector<Var> raw_pos;
  raw_pos.reserve(group.positives.size());
  for (const Var& p : group.positives)
    raw_pos.push_back(tape.cosine_similarity(group.anchor, p));
  Var mean_pos = tape.mean_all(tape.stack_scalars(raw_pos));

  std::vector<Var> pos = scaled_similarities(tape, group, group.positives, tau);
  std::vector<Var> neg = scaled_similarities(tape, group, group.negatives, tau);
  std::vector<Var> all = pos;
  all.insert(all.end(), neg.begin(), neg.end());

  Var lse_neg = tape.logsumexp_col(tape.stack_scalars(neg));
  Var lse_all = tape.logsumexp_col(tape.stack_scalars(all));
  Var log_ratio = tape.scale(tape.sub(lse_neg, lse_all),
                             1.0 / static_cast<double>(group.negatives.size()));

  Var strength = tape.scale(tape.shift(mean_pos, -beta), -1.0);
  return tape.hinge(tape.hadamard(strength, log_ratio));
}

Var loss_lc(Tape& tape, std::span<const ContrastiveGroup> groups,
            const ContrastiveConfig& config) {
  Var total = tape.constant(nn::Matrix::Zero(1, 1));
  for (const ContrastiveGroup& g : groups) {
    Var term = tape.scale(loss_l1(tape, g, config.tau), config.omega1);
    term = tape.add(term, tape.scale(loss_l2(tape, g, config.tau, config.beta),
                                     config.omega2));
    total = tape.add(total, term);
  }
  return total;
}

}  // namespace bitag
