#pragma once

// Caption generation: greedy and beam-search decoding.
//
// <pad>, <sos> and <unk> are never emitted: their logits are set to -inf
// before the log-softmax, so reported scores are log-probabilities under the
// renormalized distribution over the remaining tokens.

#include <vector>

#include "sgn/model.hpp"

namespace sgn {

struct Hypothesis {
  TokenSequence tokens;  // words, without <eos>
  double log_prob = 0.0;
  bool finished = false;  // emitted <eos> before the length cap
};

struct GreedyResult {
  Hypothesis hypothesis;
  std::vector<Vector> alphas;  // attention weights, one per emitted token
};

// log-softmax of `logits` with the never-emitted tokens masked out.
Vector masked_log_probs(const Eigen::Ref<const Vector>& logits);

GreedyResult greedy_decode(const AnnotationSet& annotations, const Vector& attributes,
                           const ModelParams& params, const ModelConfig& config, int max_len);

struct BeamOptions {
  int width = 1;
  int max_len = 16;
  bool length_normalize = false;
};

// Returns every completed hypothesis (finished, or cut at max_len), best first.
std::vector<Hypothesis> beam_search(const AnnotationSet& annotations, const Vector& attributes,
                                    const ModelParams& params, const ModelConfig& config,
                                    const BeamOptions& options);

// Log-probability of `words` (plus <eos> when `finished`) recomputed through a
// teacher-forced forward pass.
double score_sequence(const AnnotationSet& annotations, const Vector& attributes,
                      const ModelParams& params, const ModelConfig& config,
                      const TokenSequence& words, bool finished);

}  // namespace sgn
