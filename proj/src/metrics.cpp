#include "sgn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "sgn/errors.hpp"

namespace sgn {

namespace {

using NGram = std::vector<std::string>;
using NGramCounts = std::map<NGram, int>;

NGramCounts count_ngrams(const Tokens& tokens, int n) {
  NGramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

void require_nonempty(const EvalCorpus& corpus, const char* metric) {
  if (corpus.empty()) throw ContractError(std::string(metric) + ": empty corpus");
  for (const auto& item : corpus) {
    if (item.references.empty()) {
      throw ContractError(std::string(metric) + ": every item needs at least one reference");
    }
  }
}

}  // namespace

std::vector<double> bleu(const EvalCorpus& corpus, int n_max) {
  require_nonempty(corpus, "bleu");
  if (n_max < 1) throw ContractError("bleu: n_max must be >= 1");
  std::vector<double> matched(n_max, 0.0), total(n_max, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (const auto& item : corpus) {
    const auto c = static_cast<double>(item.candidate.size());
    cand_len += c;
    // Closest reference length; ties go to the shorter one.
    double best = -1.0;
    for (const auto& ref : item.references) {
      const auto r = static_cast<double>(ref.size());
      if (best < 0.0 || std::abs(r - c) < std::abs(best - c) ||
          (std::abs(r - c) == std::abs(best - c) && r < best)) {
        best = r;
      }
    }
    ref_len += best;
    for (int n = 1; n <= n_max; ++n) {
      NGramCounts cand = count_ngrams(item.candidate, n);
      NGramCounts max_ref;
      for (const auto& ref : item.references) {
        for (const auto& [gram, cnt] : count_ngrams(ref, n)) {
          auto& slot = max_ref[gram];
          slot = std::max(slot, cnt);
        }
      }
      for (const auto& [gram, cnt] : cand) {
        auto it = max_ref.find(gram);
        matched[n - 1] += it == max_ref.end() ? 0 : std::min(cnt, it->second);
        total[n - 1] += cnt;
      }
    }
  }
  std::vector<double> scores(n_max, 0.0);
  if (cand_len == 0.0) return scores;
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 1; n <= n_max; ++n) {
    if (matched[n - 1] == 0.0 || total[n - 1] == 0.0) zero = true;
    if (!zero) log_sum += std::log(matched[n - 1] / total[n - 1]);
    scores[n - 1] = zero ? 0.0 : bp * std::exp(log_sum / n);
  }
  return scores;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const EvalCorpus& corpus, double beta) {
  require_nonempty(corpus, "rouge_l");
  const double b2 = beta * beta;
  double total = 0.0;
  for (const auto& item : corpus) {
    double best = 0.0;
    for (const auto& ref : item.references) {
      const auto lcs = static_cast<double>(lcs_length(item.candidate, ref));
      if (lcs == 0.0) continue;
      const double p = lcs / static_cast<double>(item.candidate.size());
      const double r = lcs / static_cast<double>(ref.size());
      best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
    }
    total += best;
  }
  return total / static_cast<double>(corpus.size());
}

namespace {

using TfIdf = std::map<NGram, double>;

TfIdf tf_idf(const Tokens& tokens, int n, const std::map<NGram, int>& df, double log_n) {
  TfIdf vec;
  const NGramCounts counts = count_ngrams(tokens, n);
  int total = 0;
  for (const auto& [g, c] : counts) total += c;
  for (const auto& [g, c] : counts) {
    auto it = df.find(g);
    const double d = it == df.end() ? 1.0 : std::max(1.0, static_cast<double>(it->second));
    vec[g] = static_cast<double>(c) / total * (log_n - std::log(d));
  }
  return vec;
}

double cosine(const TfIdf& a, const TfIdf& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [g, v] : a) {
    na += v * v;
    auto it = b.find(g);
    if (it != b.end()) dot += v * it->second;
  }
  for (const auto& [g, v] : b) nb += v * v;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

CiderResult cider(const EvalCorpus& corpus, const CiderOptions& options) {
  require_nonempty(corpus, "cider");
  if (options.n_max < 1) throw ContractError("cider: n_max must be >= 1");
  const double log_n = std::log(static_cast<double>(corpus.size()));
  CiderResult result;
  result.similarity_per_n.assign(options.n_max, 0.0);
  for (int n = 1; n <= options.n_max; ++n) {
    std::map<NGram, int> df;
    for (const auto& item : corpus) {
      std::set<NGram> seen;
      for (const auto& ref : item.references) {
        for (const auto& [g, c] : count_ngrams(ref, n)) seen.insert(g);
      }
      for (const auto& g : seen) ++df[g];
    }
    double sum = 0.0;
    for (const auto& item : corpus) {
      const TfIdf cand = tf_idf(item.candidate, n, df, log_n);
      double item_sum = 0.0;
      for (const auto& ref : item.references) {
        double sim = cosine(cand, tf_idf(ref, n, df, log_n));
        if (options.length_penalty) {
          const double gap =
              static_cast<double>(item.candidate.size()) - static_cast<double>(ref.size());
          sim *= std::exp(-(gap * gap) / (2.0 * options.sigma * options.sigma));
        }
        item_sum += sim;
      }
      sum += item_sum / static_cast<double>(item.references.size());
    }
    result.similarity_per_n[n - 1] = sum / static_cast<double>(corpus.size());
  }
  double mean = 0.0;
  for (double s : result.similarity_per_n) mean += s;
  result.similarity = mean / options.n_max;
  result.score = 10.0 * result.similarity;
  return result;
}

MetricRow evaluate_corpus(const EvalCorpus& corpus) {
  MetricRow row;
  const auto b = bleu(corpus, 4);
  for (int i = 0; i < 4; ++i) row.bleu[i] = 100.0 * b[i];
  row.rouge_l = 100.0 * rouge_l(corpus);
  row.cider = 100.0 * cider(corpus).similarity;
  return row;
}

std::string format_metric_row(const MetricRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f,%.4f,%.4f", row.bleu[0], row.bleu[1],
                row.bleu[2], row.bleu[3], row.rouge_l, row.cider);
  return buf;
}

}  // namespace sgn
