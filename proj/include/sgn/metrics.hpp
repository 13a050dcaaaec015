#pragma once

// Corpus-level caption metrics: BLEU@1..4, ROUGE-L and CIDEr.

#include <array>
#include <string>
#include <vector>

namespace sgn {

using Tokens = std::vector<std::string>;

struct EvalItem {
  Tokens candidate;
  std::vector<Tokens> references;
};
using EvalCorpus = std::vector<EvalItem>;

// BLEU@1..n_max in [0, 1]: clipped n-gram precisions summed over the corpus,
// geometric mean, brevity penalty exp(1 - r/c) against the closest reference
// length. A zero precision at any order makes that BLEU@n zero.
std::vector<double> bleu(const EvalCorpus& corpus, int n_max = 4);

// Longest common subsequence length by dynamic programming.
std::size_t lcs_length(const Tokens& a, const Tokens& b);

// Per candidate/reference pair F_beta from LCS precision and recall, the best
// reference per item, averaged over items.
double rouge_l(const EvalCorpus& corpus, double beta = 1.2);

struct CiderOptions {
  int n_max = 4;
  bool length_penalty = false;  // gaussian penalty on candidate/reference length gap
  double sigma = 6.0;
};

struct CiderResult {
  // Mean over items and references of the tf-idf cosine similarity, per n.
  std::vector<double> similarity_per_n;
  // Uniformly weighted mean of similarity_per_n; 1 for a perfect match.
  double similarity = 0.0;
  // Reference-definition scale (x10).
  double score = 0.0;
};

// Document frequencies are counted over the reference sets; idf = log(N / df).
CiderResult cider(const EvalCorpus& corpus, const CiderOptions& options = {});

struct MetricRow {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double cider = 0.0;
};

// BLEU and ROUGE-L x100, CIDEr similarity x100.
MetricRow evaluate_corpus(const EvalCorpus& corpus);
std::string format_metric_row(const MetricRow& row);
inline constexpr const char* kMetricHeader = "BLEU@1,BLEU@2,BLEU@3,BLEU@4,ROUGE_L,CIDEr";

}  // namespace sgn
