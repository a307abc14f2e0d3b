#pragma once

#include <vector>

#include "sft/graph.hpp"

namespace sft {

// Sequence objectives, all in nats and per utterance (no length averaging;
// batching averages per-utterance values). Blank is token id 0 throughout.

// Fewest frames that can realize `target` under CTC: L plus one separator
// frame per adjacent repeat.
int64_t ctc_min_frames(const std::vector<int>& target);

// log_probs: V x T per-frame log-probabilities. Forward algorithm over the
// extended label sequence (2L+1), log-space. Throws InfeasibleAlignmentError
// when T is too short for the target.
NodeId ctc_loss(Graph& g, NodeId log_probs, const std::vector<int>& target);

// lattice: V x T x (L+1) log-probabilities from the joint network, where
// slice [:, t, l] conditions on prediction context y_1..y_l. Forward
// recursion over all monotonic (T+L)-step alignments.
NodeId transducer_loss(Graph& g, NodeId lattice, const std::vector<int>& target);

// log_probs: V x L teacher-forced decoder output; target ends with eos.
// Mean over positions, optional label smoothing.
NodeId nll_loss(Graph& g, NodeId log_probs, const std::vector<int>& target,
                double label_smoothing = 0.0);

// (1 - w) * nll + w * ctc. w must be in [0, 1].
NodeId hybrid_loss(Graph& g, NodeId nll, NodeId ctc, double w);

// Log-space helpers shared with decoding.
double log_add(double a, double b);

}  // namespace sft
