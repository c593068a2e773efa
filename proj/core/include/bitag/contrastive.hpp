#pragma once

#include "bitag/corpus.hpp"
#include "bitag/encoder.hpp"
#include "bitag/nn.hpp"

#include <span>
#include <vector>

namespace bitag {

struct ContrastiveConfig {
  bool enabled = true;
  double tau = 0.1;    // similarity temperature
  double beta = 0.85;  // similarity cap for the penalty term
  double omega1 = 1.0;
  double omega2 = 1.0;
};

// One anchor with its positive and negative entity embeddings (1 x d rows on
// a shared tape). The candidate pool A(i) is positives + negatives; the
// anchor itself is never part of it.
struct ContrastiveGroup {
  nn::Var anchor;
  std::vector<nn::Var> positives;
  std::vector<nn::Var> negatives;
};

// Which role serves as anchor. Both senses are emitted during training; the
// framework is symmetric.
enum class AnchorRole { Subject, Object };

// Builds one group per (anchor entity x dropout view). Positives are the
// anchor's related entities drawn from both views; negatives are every other
// entity embedding in the batch (both views), excluding the anchor's own
// other-view copy and its positives. Anchors with no positives are omitted.
std::vector<ContrastiveGroup> build_groups(
    nn::Tape& tape, std::span<const Example* const> examples,
    std::span<const DualViews> views, AnchorRole role);

// Multi-positive supervised contrastive loss:
//   -1/|P| * log( sum_P exp(sim/tau) / sum_A exp(sim/tau) )
nn::Var loss_l1(nn::Tape& tape, const ContrastiveGroup& group, double tau);

// Similarity-cap penalty, hinged at zero over the whole product:
//   [ -(mean_P sim - beta) * 1/|N| * log( sum_N exp(sim/tau) / sum_A ... ) ]+
nn::Var loss_l2(nn::Tape& tape, const ContrastiveGroup& group, double tau,
                double beta);

// Sum over groups of omega1 * L1 + omega2 * L2, reduced in group order.
nn::Var loss_lc(nn::Tape& tape, std::span<const ContrastiveGroup> groups,
                const ContrastiveConfig& config);

}  // namespace bitag
