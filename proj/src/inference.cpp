#include "sgn/inference.hpp"

#include <algorithm>
#include <limits>

namespace sgn {

namespace {

bool emittable(int token) { return token != kPadId && token != kSosId && token != kUnkId; }

struct Session {
  Tape tape;
  BoundParams bound;
  ImageInputs image;
  ImageStepOutput start;

  Session(const AnnotationSet& annotations, const Vector& attributes, const ModelParams& params,
          const ModelConfig& config) {
    tape.set_recording(false);
    bound = bind(tape, params);
    image = place_inputs(tape, annotations, attributes, config);
    start = image_step(image, bound, config);
  }
};

}  // namespace

Vector masked_log_probs(const Eigen::Ref<const Vector>& logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (emittable(static_cast<int>(i))) mx = std::max(mx, logits(i));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (emittable(static_cast<int>(i))) total += std::exp(logits(i) - mx);
  }
  const double lse = mx + std::log(total);
  Vector out(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    out(i) = emittable(static_cast<int>(i)) ? logits(i) - lse
                                            : -std::numeric_limits<double>::infinity();
  }
  return out;
}

GreedyResult greedy_decode(const AnnotationSet& annotations, const Vector& attributes,
                           const ModelParams& params, const ModelConfig& config, int max_len) {
  Session s(annotations, attributes, params, config);
  GreedyResult result;
  DecodeState state = s.start.state;
  int word = kSosId;
  for (int t = 0; t < max_len; ++t) {
    StepOutput step = advance(t, word, state, s.image, s.bound, config);
    const Vector lp = masked_log_probs(step.logits.value().col(0));
    int best = -1;
    for (Eigen::Index i = 0; i < lp.size(); ++i) {
      if (!emittable(static_cast<int>(i))) continue;
      if (best < 0 || lp(i) > lp(best)) best = static_cast<int>(i);
    }
    result.hypothesis.log_prob += lp(best);
    result.alphas.emplace_back(step.alpha.value().col(0));
    if (best == kEosId) {
      result.hypothesis.finished = true;
      break;
    }
    result.hypothesis.tokens.push_back(best);
    word = best;
    state = step.state;
  }
  return result;
}

std::vector<Hypothesis> beam_search(const AnnotationSet& annotations, const Vector& attributes,
                                    const ModelParams& params, const ModelConfig& config,
                                    const BeamOptions& options) {
  if (options.width < 1) throw ContractError("beam_search: width must be >= 1");
  if (options.max_len < 0) throw ContractError("beam_search: max_len must be >= 0");
  Session s(annotations, attributes, params, config);

  struct Live {
    Hypothesis hyp;
    DecodeState state;
    int last = kSosId;
  };
  struct Candidate {
    double score;
    int token;
    std::size_t parent;
  };

  std::vector<Live> live{{Hypothesis{}, s.start.state, kSosId}};
  std::vector<Hypothesis> done;
  for (int t = 0; t < options.max_len && !live.empty(); ++t) {
    std::vector<StepOutput> steps;
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < live.size(); ++b) {
      steps.push_back(advance(t, live[b].last, live[b].state, s.image, s.bound, config));
      const Vector lp = masked_log_probs(steps.back().logits.value().col(0));
      for (Eigen::Index tok = 0; tok < lp.size(); ++tok) {
        if (!emittable(static_cast<int>(tok))) continue;
        candidates.push_back({live[b].hyp.log_prob + lp(tok), static_cast<int>(tok), b});
      }
    }
    const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(options.width));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    std::vector<Live> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = candidates[c];
      Hypothesis hyp = live[cand.parent].hyp;
      hyp.log_prob = cand.score;
      if (cand.token == kEosId) {
        hyp.finished = true;
        done.push_back(std::move(hyp));
      } else {
        hyp.tokens.push_back(cand.token);
        next.push_back({std::move(hyp), steps[cand.parent].state, cand.token});
      }
    }
    live = std::move(next);
  }
  for (Live& l : live) done.push_back(std::move(l.hyp));

  auto rank = [&](const Hypothesis& h) {
    if (!options.length_normalize) return h.log_prob;
    const auto len = h.tokens.size() + (h.finished ? 1 : 0);
    return len > 0 ? h.log_prob / static_cast<double>(len) : h.log_prob;
  };
  std::stable_sort(done.begin(), done.end(),
                   [&](const Hypothesis& a, const Hypothesis& b) { return rank(a) > rank(b); });
  return done;
}

double score_sequence(const AnnotationSet& annotations, const Vector& attributes,
                      const ModelParams& params, const ModelConfig& config,
                      const TokenSequence& words, bool finished) {
  Tape tape;
  tape.set_recording(false);
  BoundParams bound = bind(tape, params);
  ImageInputs image = place_inputs(tape, annotations, attributes, config);
  std::vector<Tensor> logits;
  TokenSequence targets;
  if (words.empty()) {
    ImageStepOutput start = image_step(image, bound, config);
    logits.push_back(advance(0, kSosId, start.state, image, bound, config).logits);
    targets.push_back(kEosId);
  } else {
    SequenceOutput seq = forward_sequence(image, words, bound, config);
    logits = std::move(seq.logits);
    targets = std::move(seq.targets);
  }
  const std::size_t n = words.size() + (finished ? 1 : 0);
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    total += masked_log_probs(logits[t].value().col(0))(targets[t]);
  }
  return total;
}

}  // namespace sgn
