#include "bitag/contrastive.hpp"

#include "testutil.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace bitag;
using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

Matrix unit2(double angle) {
  Matrix m(1, 2);
  m << std::cos(angle), std::sin(angle);
  return m;
}

double cosine(const Matrix& a, const Matrix& b) {
  return a.row(0).dot(b.row(0)) / (a.row(0).norm() * b.row(0).norm());
}

// Independent scalar oracle for the multi-positive loss, written directly
// from the ratio-of-sums form with plain loops.
double l1_oracle(const Matrix& anchor, const std::vector<Matrix>& pos,
                 const std::vector<Matrix>& neg, double tau) {
  double num = 0.0, den = 0.0;
  for (const Matrix& p : pos) num += std::exp(cosine(anchor, p) / tau);
  den = num;
  for (const Matrix& n : neg) den += std::exp(cosine(anchor, n) / tau);
  return -std::log(num / den) / static_cast<double>(pos.size());
}

double l2_oracle(const Matrix& anchor, const std::vector<Matrix>& pos,
                 const std::vector<Matrix>& neg, double tau, double beta) {
  if (neg.empty()) return 0.0;
  double mean_pos = 0.0;
  for (const Matrix& p : pos) mean_pos += cosine(anchor, p);
  mean_pos /= static_cast<double>(pos.size());
  double num = 0.0, den = 0.0;
  for (const Matrix& n : neg) num += std::exp(cosine(anchor, n) / tau);
  den = num;
  for (const Matrix& p : pos) den += std::exp(cosine(anchor, p) / tau);
  double product = -(mean_pos - beta) * std::log(num / den) /
                   static_cast<double>(neg.size());
  return std::max(0.0, product);
}

ContrastiveGroup make_group(Tape& tape, const Matrix& anchor,
                            const std::vector<Matrix>& pos,
                            const std::vector<Matrix>& neg) {
  ContrastiveGroup g;
  g.anchor = tape.constant(anchor);
  for (const Matrix& p : pos) g.positives.push_back(tape.constant(p));
  for (const Matrix& n : neg) g.negatives.push_back(tape.constant(n));
  return g;
}

struct RandomGroup {
  Matrix anchor;
  std::vector<Matrix> pos, neg;
};

RandomGroup random_group(std::mt19937_64& rng, int dim, int max_pos = 3,
                         int max_neg = 4) {
  RandomGroup g;
  g.anchor = nn::randn(1, dim, 1.0, rng);
  int np = std::uniform_int_distribution<int>(1, max_pos)(rng);
  int nn_count = std::uniform_int_distribution<int>(0, max_neg)(rng);
  for (int i = 0; i < np; ++i) g.pos.push_back(nn::randn(1, dim, 1.0, rng));
  for (int i = 0; i < nn_count; ++i)
    g.neg.push_back(nn::randn(1, dim, 1.0, rng));
  return g;
}

}  // namespace

TEST_CASE("L1 vanishes when there are no negatives") {
  Tape tape;
  auto g = make_group(tape, unit2(0.0), {unit2(0.3), unit2(1.0)}, {});
  CHECK(loss_l1(tape, g, 0.1).scalar() == 0.0);
}

TEST_CASE("L1 matches the hand-computed two-member case") {
  // sim(a,p) = 1, sim(a,n) = -1, tau = 1: -log(e / (e + 1/e)) ~ 0.12693
  Tape tape;
  auto g = make_group(tape, unit2(0.0), {unit2(0.0)}, {unit2(M_PI)});
  double expected = std::log(std::exp(1.0) + std::exp(-1.0)) - 1.0;
  CHECK(loss_l1(tape, g, 1.0).scalar() ==
        doctest::Approx(expected).epsilon(1e-9));
  CHECK(loss_l1(tape, g, 1.0).scalar() == doctest::Approx(0.12693).epsilon(1e-4));
}

TEST_CASE("L1 with equal similarities reduces to -(1/2) log(2/|A|)") {
  Tape tape;
  Matrix member = unit2(0.4);
  auto g = make_group(tape, unit2(0.0), {member, member},
                      {member, member, member});
  double expected = -0.5 * std::log(2.0 / 5.0);
  CHECK(loss_l1(tape, g, 0.7).scalar() ==
        doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("L1 equals the oracle on random groups") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    RandomGroup rg = random_group(rng, 8);
    Tape tape;
    auto g = make_group(tape, rg.anchor, rg.pos, rg.neg);
    CHECK(loss_l1(tape, g, 0.1).scalar() ==
          doctest::Approx(l1_oracle(rg.anchor, rg.pos, rg.neg, 0.1))
              .epsilon(1e-9));
  }
}

TEST_CASE("L1 requires positives and rejects zero vectors") {
  Tape tape;
  ContrastiveGroup empty;
  empty.anchor = tape.constant(unit2(0));
  CHECK_THROWS_AS(loss_l1(tape, empty, 0.1), std::invalid_argument);

  auto g = make_group(tape, unit2(0), {Matrix::Zero(1, 2)}, {});
  CHECK_THROWS_AS(loss_l1(tape, g, 0.1), std::domain_error);
}

TEST_CASE("L2 is zero at or below the similarity cap") {
  double beta = 0.85;
  {
    // mean positive similarity exactly beta
    Tape tape;
    auto g = make_group(tape, unit2(0.0), {unit2(std::acos(beta))},
                        {unit2(2.0)});
    CHECK(loss_l2(tape, g, 1.0, beta).scalar() == 0.0);
  }
  {
    // below beta
    Tape tape;
    auto g = make_group(tape, unit2(0.0), {unit2(1.0)}, {unit2(2.0)});
    CHECK(loss_l2(tape, g, 1.0, beta).scalar() == 0.0);
  }
}

TEST_CASE("L2 matches the hand-computed case above the cap") {
  // sim(a,p) = 0.95, sim(a,n) = 0, tau = 1, beta = 0.85
  Tape tape;
  auto g = make_group(tape, unit2(0.0), {unit2(std::acos(0.95))},
                      {unit2(M_PI / 2.0)});
  double expected = 0.1 * std::log(std::exp(0.95) + 1.0);
  double got = loss_l2(tape, g, 1.0, 0.85).scalar();
  CHECK(got == doctest::Approx(expected).epsilon(1e-9));
  CHECK(got == doctest::Approx(0.12773).epsilon(1e-4));
  CHECK(got > 0.0);
}

TEST_CASE("L2 is zero when there are no negatives") {
  Tape tape;
  auto g = make_group(tape, unit2(0.0), {unit2(0.1)}, {});
  CHECK(loss_l2(tape, g, 0.1, 0.85).scalar() == 0.0);
}

TEST_CASE("L2 hinge boundary holds on random groups") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> beta_dist(-0.5, 0.95);
  for (int i = 0; i < 200; ++i) {
    RandomGroup rg = random_group(rng, 6);
    double tau = 0.5;
    double beta = beta_dist(rng);
    Tape tape;
    auto g = make_group(tape, rg.anchor, rg.pos, rg.neg);
    double got = loss_l2(tape, g, tau, beta).scalar();
    CHECK(got == doctest::Approx(l2_oracle(rg.anchor, rg.pos, rg.neg, tau,
                                           beta))
                     .epsilon(1e-9));
    double mean_pos = 0.0;
    for (const Matrix& p : rg.pos) mean_pos += cosine(rg.anchor, p);
    mean_pos /= static_cast<double>(rg.pos.size());
    if (mean_pos <= beta) CHECK(got == 0.0);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("losses are invariant to positive rescaling of embeddings") {
  std::mt19937_64 rng(31);
  RandomGroup rg = random_group(rng, 8, 3, 3);
  if (rg.neg.empty()) rg.neg.push_back(nn::randn(1, 8, 1.0, rng));

  Tape t1, t2;
  auto g1 = make_group(t1, rg.anchor, rg.pos, rg.neg);
  RandomGroup scaled = rg;
  scaled.anchor *= 7.5;
  scaled.pos[0] *= 0.03;
  scaled.neg[0] *= 250.0;
  auto g2 = make_group(t2, scaled.anchor, scaled.pos, scaled.neg);

  CHECK(loss_l1(t1, g1, 0.2).scalar() ==
        doctest::Approx(loss_l1(t2, g2, 0.2).scalar()).epsilon(1e-9));
  CHECK(loss_l2(t1, g1, 0.2, 0.5).scalar() ==
        doctest::Approx(loss_l2(t2, g2, 0.2, 0.5).scalar()).epsilon(1e-9));
}

TEST_CASE("raising one positive similarity strictly lowers L1") {
  Tape tape;
  std::vector<double> angles{1.2, 0.8, 0.4, 0.1};
  double prev = 0.0;
  for (size_t i = 0; i < angles.size(); ++i) {
    auto g = make_group(tape, unit2(0.0), {unit2(angles[i]), unit2(1.3)},
                        {unit2(2.0), unit2(2.6)});
    double v = loss_l1(tape, g, 0.3).scalar();
    if (i > 0) CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("Lc sums weighted group losses in fixed order") {
  ContrastiveConfig cfg;
  cfg.tau = 0.4;
  cfg.beta = 0.2;

  Tape tape;
  std::vector<ContrastiveGroup> groups;
  groups.push_back(make_group(tape, unit2(0.0), {unit2(0.2)}, {unit2(2.2)}));
  groups.push_back(
      make_group(tape, unit2(1.0), {unit2(1.1), unit2(0.9)}, {unit2(3.0)}));

  double expected = 0.0;
  for (const ContrastiveGroup& g : groups)
    expected += cfg.omega1 * loss_l1(tape, g, cfg.tau).scalar() +
                cfg.omega2 * loss_l2(tape, g, cfg.tau, cfg.beta).scalar();
  CHECK(loss_lc(tape, groups, cfg).scalar() ==
        doctest::Approx(expected).epsilon(1e-9));

  // zero weights silence their component
  ContrastiveConfig only_l1 = cfg;
  only_l1.omega2 = 0.0;
  double l1_sum = loss_l1(tape, groups[0], cfg.tau).scalar() +
                  loss_l1(tape, groups[1], cfg.tau).scalar();
  CHECK(loss_lc(tape, groups, only_l1).scalar() ==
        doctest::Approx(l1_sum).epsilon(1e-9));

  CHECK(loss_lc(tape, {}, cfg).scalar() == 0.0);
}

TEST_CASE("with one positive L1 reduces to single-positive InfoNCE") {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 100; ++i) {
    RandomGroup rg = random_group(rng, 8, 1, 4);
    Tape tape;
    auto g = make_group(tape, rg.anchor, rg.pos, rg.neg);
    // reference InfoNCE: -log exp(s_p/tau) / sum_all exp(s/tau)
    double sp = std::exp(cosine(rg.anchor, rg.pos[0]) / 0.1);
    double den = sp;
    for (const Matrix& n : rg.neg) den += std::exp(cosine(rg.anchor, n) / 0.1);
    double reference = -std::log(sp / den);
    CHECK(std::abs(loss_l1(tape, g, 0.1).scalar() - reference) <= 1e-6);
  }
}

TEST_CASE("Lc gradients match finite differences away from the hinge kink") {
  std::mt19937_64 rng(53);
  ContrastiveConfig cfg;
  cfg.tau = 0.5;
  cfg.beta = 0.3;
  int checked = 0;
  while (checked < 50) {
    RandomGroup rg = random_group(rng, 4, 2, 3);
    if (rg.neg.empty()) continue;
    double mean_pos = 0.0;
    for (const Matrix& p : rg.pos) mean_pos += cosine(rg.anchor, p);
    mean_pos /= static_cast<double>(rg.pos.size());
    if (std::abs(mean_pos - cfg.beta) <= 1e-3) continue;
    ++checked;

    std::vector<nn::Parameter> params;
    params.emplace_back("anchor", rg.anchor);
    for (size_t i = 0; i < rg.pos.size(); ++i)
      params.emplace_back("p" + std::to_string(i), rg.pos[i]);
    for (size_t i = 0; i < rg.neg.size(); ++i)
      params.emplace_back("n" + std::to_string(i), rg.neg[i]);

    auto build = [&](Tape& tape) {
      ContrastiveGroup g;
      g.anchor = tape.leaf(params[0]);
      for (size_t i = 0; i < rg.pos.size(); ++i)
        g.positives.push_back(tape.leaf(params[1 + i]));
      for (size_t i = 0; i < rg.neg.size(); ++i)
        g.negatives.push_back(tape.leaf(params[1 + rg.pos.size() + i]));
      std::vector<ContrastiveGroup> groups{g};
      return loss_lc(tape, groups, cfg);
    };

    Tape tape;
    tape.backward(build(tape));
    const double step = 1e-5;
    for (nn::Parameter& p : params) {
      for (long c = 0; c < p.value.cols(); ++c) {
        double saved = p.value(0, c);
        p.value(0, c) = saved + step;
        Tape tp;
        double up = build(tp).scalar();
        p.value(0, c) = saved - step;
        Tape tm;
        double down = build(tm).scalar();
        p.value(0, c) = saved;
        double fd = (up - down) / (2.0 * step);
        double analytic = p.grad(0, c);
        double rel = std::abs(analytic - fd) /
                     std::max({1e-8, std::abs(analytic), std::abs(fd)});
        CHECK(rel < 1e-4);
      }
      p.zero_grad();
    }
  }
}

TEST_CASE("build_groups follows the reference batch construction") {
  Corpus corpus =
      testutil::prepared(testutil::reference_batch(), MatchStandard::Partial);
  REQUIRE(corpus.examples.size() == 2);
  const Example& seo = corpus.examples[0];  // Tom
  const Example& epo = corpus.examples[1];  // London

  Tape tape;
  std::mt19937_64 rng(3);
  long l0 = static_cast<long>(seo.tokens.size());
  long l1 = static_cast<long>(epo.tokens.size());
  DualViews v0{tape.constant(nn::randn(l0, 8, 1.0, rng)),
               tape.constant(nn::randn(l0, 8, 1.0, rng))};
  DualViews v1{tape.constant(nn::randn(l1, 8, 1.0, rng)),
               tape.constant(nn::randn(l1, 8, 1.0, rng))};
  std::vector<const Example*> batch{&seo, &epo};
  std::vector<DualViews> views{v0, v1};

  auto groups = build_groups(tape, batch, views, AnchorRole::Subject);
  // two subject anchors (Tom, London) x two views
  REQUIRE(groups.size() == 4);

  // Tom: positives {New York, 2000} x 2 views; negatives {London, England}
  // x 2 views (batch entities minus Tom's copies and positives).
  CHECK(groups[0].positives.size() == 4);
  CHECK(groups[0].negatives.size() == 4);
  // London: positives {England} x 2; negatives {Tom, New York, 2000} x 2.
  CHECK(groups[2].positives.size() == 2);
  CHECK(groups[2].negatives.size() == 6);

  auto object_groups = build_groups(tape, batch, views, AnchorRole::Object);
  // object anchors: New York, 2000, England -> 3 x 2 views
  CHECK(object_groups.size() == 6);
  for (const ContrastiveGroup& g : object_groups)
    CHECK(g.positives.size() == 2);  // each object has one related subject
}

TEST_CASE("build_groups emits one group per subject and view") {
  RawExample raw{"a x b", {{"a", "r", "b"}}};
  Corpus corpus = testutil::prepared({raw}, MatchStandard::Partial);
  Tape tape;
  std::mt19937_64 rng(5);
  long l = static_cast<long>(corpus.examples[0].tokens.size());
  // single view: both views share the same representation node
  nn::Var h = tape.constant(nn::randn(l, 4, 1.0, rng));
  std::vector<const Example*> batch{&corpus.examples[0]};
  std::vector<DualViews> views{DualViews{h, h}};
  auto groups = build_groups(tape, batch, views, AnchorRole::Subject);
  REQUIRE(groups.size() == 2);  // one subject, two (identical) views
  CHECK(groups[0].positives.size() == 2);
  CHECK(groups[0].negatives.empty());
}
