#pragma once

// Brute-force references for the decoder and the LCS.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "sgn/inference.hpp"
#include "sgn/metrics.hpp"
#include "support.hpp"

namespace sgn::test {

struct Instance {
  ModelConfig config;
  ModelParams params;
  AnnotationSet annotations;
  Vector attributes;
};

inline Instance random_instance(Variant v, int vocab, std::uint64_t seed, double spread = 15.0) {
  Instance in;
  ModelConfig& c = in.config;
  c.regions = 3;
  c.feature_dim = 4;
  c.hidden_dim = 6;
  c.guide_dim = 4;
  c.embed_dim = 5;
  c.attr_dim = 3;
  c.input_dim = 5;
  c.vocab_size = vocab;
  c.variant = v;
  c.dropout_rate = 0.0;
  in.params = map_params<Matrix>(init_params(c, seed),
                                 [&](const Matrix& m) -> Matrix { return spread * m; });
  std::mt19937_64 rng(seed * 7919 + 1);
  in.annotations = AnnotationSet{random_matrix(rng, c.regions, c.feature_dim)};
  in.attributes = random_uniform(rng, c.attr_dim, 1, 0.0, 1.0);
  in.attributes /= in.attributes.sum();
  return in;
}

// log p over emittable tokens only, computed independently of the decoder.
inline double masked_log_prob(const Matrix& logits, int token) {
  double z = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (i == kPadId || i == kSosId || i == kUnkId) continue;
    z += std::exp(logits(i));
  }
  return logits(token) - std::log(z);
}

inline double brute_score(const Instance& in, const TokenSequence& words, bool finished) {
  Tape tape;
  tape.set_recording(false);
  BoundParams b = bind(tape, in.params);
  ImageInputs img = place_inputs(tape, in.annotations, in.attributes, in.config);
  // A dummy word keeps the caption nonempty; only prefixes are read.
  TokenSequence caption = words;
  caption.push_back(kNumReserved);
  SequenceOutput seq = forward_sequence(img, caption, b, in.config);
  double total = 0.0;
  for (std::size_t t = 0; t < words.size(); ++t) total += masked_log_prob(seq.logits[t].value(), words[t]);
  if (finished) total += masked_log_prob(seq.logits[words.size()].value(), kEosId);
  return total;
}

struct Best {
  TokenSequence words;
  bool finished = false;
  double score = -std::numeric_limits<double>::infinity();
};

// Every sequence the decoder could return within max_len steps.
inline Best brute_force(const Instance& in, int max_len) {
  Best best;
  std::vector<int> alphabet;
  for (int w = kNumReserved; w < in.config.vocab_size; ++w) alphabet.push_back(w);
  std::vector<TokenSequence> frontier{{}};
  for (int len = 0; len <= max_len; ++len) {
    std::vector<TokenSequence> next;
    for (const TokenSequence& words : frontier) {
      if (len < max_len) {
        const double s = brute_score(in, words, true);
        if (s > best.score) best = {words, true, s};
        for (int w : alphabet) {
          TokenSequence longer = words;
          longer.push_back(w);
          next.push_back(std::move(longer));
        }
      } else {
        const double s = brute_score(in, words, false);
        if (s > best.score) best = {words, false, s};
      }
    }
    frontier = std::move(next);
  }
  return best;
}

// Longest common subsequence by trying every subsequence of the shorter side.
inline std::size_t brute_lcs(const Tokens& a, const Tokens& b) {
  const Tokens& s = a.size() <= b.size() ? a : b;
  const Tokens& l = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (unsigned mask = 0; mask < (1u << s.size()); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (mask & (1u << i)) sub.push_back(s[i]);
    std::size_t j = 0;
    for (const auto& w : l)
      if (j < sub.size() && w == sub[j]) ++j;
    if (j == sub.size()) best = std::max(best, sub.size());
  }
  return best;
}

}  // namespace sgn::test
