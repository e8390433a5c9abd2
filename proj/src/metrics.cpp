#include "c2m/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace c2m::metrics {

namespace {

using Gram = std::vector<std::string>;

std::map<Gram, long> count_ngrams(std::span<const std::string> s, int n) {
  std::map<Gram, long> counts;
  if (static_cast<int>(s.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
    ++counts[Gram(s.begin() + static_cast<std::ptrdiff_t>(i),
                  s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return counts;
}

double bleu_from_counts(std::span<const NgramCounts> orders, double hyp_len, double ref_len) {
  if (hyp_len <= 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < orders.size(); ++k) {
    double matches = static_cast<double>(orders[k].matches);
    double total = static_cast<double>(orders[k].total);
    if (orders[k].matches == 0) {
      if (k == 0) return 0.0;
      matches += 1.0;
      total += 1.0;
    }
    log_sum += std::log(matches / total);
  }
  const double bp = std::exp(std::min(0.0, 1.0 - ref_len / hyp_len));
  return bp * std::exp(log_sum / static_cast<double>(orders.size()));
}

void check_order(int n) {
  if (n < 1 || n > 4) throw std::invalid_argument("BLEU order must be in 1..4");
}

}  // namespace

NgramCounts ngram_counts(std::span<const std::string> hyp, std::span<const std::string> ref, int n) {
  NgramCounts c;
  const auto h = count_ngrams(hyp, n);
  const auto r = count_ngrams(ref, n);
  for (const auto& [gram, count] : h) {
    c.total += count;
    const auto it = r.find(gram);
    if (it != r.end()) c.matches += std::min(count, it->second);
  }
  return c;
}

double bleu(std::span<const std::string> hyp, std::span<const std::string> ref, int n) {
  check_order(n);
  if (hyp.empty()) return 0.0;
  std::vector<NgramCounts> orders;
  for (int k = 1; k <= n; ++k) orders.push_back(ngram_counts(hyp, ref, k));
  return bleu_from_counts(orders, static_cast<double>(hyp.size()), static_cast<double>(ref.size()));
}

double corpus_bleu(std::span<const Tokens> hyps, std::span<const Tokens> refs, int n) {
  check_order(n);
  if (hyps.size() != refs.size()) throw std::invalid_argument("corpus_bleu: size mismatch");
  std::vector<NgramCounts> orders(static_cast<std::size_t>(n));
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += static_cast<double>(hyps[i].size());
    ref_len += static_cast<double>(refs[i].size());
    for (int k = 1; k <= n; ++k) {
      const NgramCounts c = ngram_counts(hyps[i], refs[i], k);
      orders[static_cast<std::size_t>(k - 1)].matches += c.matches;
      orders[static_cast<std::size_t>(k - 1)].total += c.total;
    }
  }
  return bleu_from_counts(orders, hyp_len, ref_len);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const std::string> hyp, std::span<const std::string> ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(hyp, ref));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(hyp.size());
  const double r = lcs / static_cast<double>(ref.size());
  constexpr double beta2 = 1.2 * 1.2;
  return (1.0 + beta2) * p * r / (r + beta2 * p);
}

std::string stem(std::string_view token) {
  static constexpr std::string_view kSuffixes[] = {"ing", "ed", "ly", "es", "s"};
  for (std::string_view suffix : kSuffixes) {
    if (token.size() >= suffix.size() + 3 && token.ends_with(suffix)) {
      return std::string(token.substr(0, token.size() - suffix.size()));
    }
  }
  return std::string(token);
}

Alignment meteor_align(std::span<const std::string> hyp, std::span<const std::string> ref) {
  std::vector<bool> hyp_used(hyp.size(), false), ref_used(ref.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  auto stage = [&](auto key) {
    std::map<std::string, std::vector<std::size_t>> ref_slots;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!ref_used[j]) ref_slots[key(ref[j])].push_back(j);
    }
    std::map<std::string, std::size_t> taken;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      if (hyp_used[i]) continue;
      const std::string k = key(hyp[i]);
      const auto it = ref_slots.find(k);
      if (it == ref_slots.end()) continue;
      std::size_t& next = taken[k];
      if (next >= it->second.size()) continue;
      const std::size_t j = it->second[next++];
      hyp_used[i] = true;
      ref_used[j] = true;
      pairs.emplace_back(i, j);
    }
  };
  stage([](const std::string& t) { return t; });
  stage([](const std::string& t) { return stem(t); });

  std::sort(pairs.begin(), pairs.end());
  Alignment a;
  a.pairs = std::move(pairs);
  for (std::size_t k = 0; k < a.pairs.size(); ++k) {
    const bool continues = k > 0 && a.pairs[k].first == a.pairs[k - 1].first + 1 &&
                           a.pairs[k].second == a.pairs[k - 1].second + 1;
    if (!continues) ++a.chunks;
  }
  return a;
}

double meteor_lite(std::span<const std::string> hyp, std::span<const std::string> ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const Alignment a = meteor_align(hyp, ref);
  const double m = static_cast<double>(a.pairs.size());
  if (m == 0.0) return 0.0;
  const double p = m / static_cast<double>(hyp.size());
  const double r = m / static_cast<double>(ref.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  return f_mean * (1.0 - 0.5 * frag * frag * frag);
}

double weighted_sum(const MetricBundle& b, const RewardWeights& weights) {
  const auto& w = weights.w;
  return w[0] * b.bleu1 + w[1] * b.bleu2 + w[2] * b.bleu3 + w[3] * b.bleu4 + w[4] * b.meteor +
         w[5] * b.rouge_l;
}

MetricBundle score_sentence(std::span<const std::string> hyp, std::span<const std::string> ref,
                            const RewardWeights& weights) {
  MetricBundle b;
  if (!hyp.empty()) {
    std::vector<NgramCounts> orders;
    for (int k = 1; k <= 4; ++k) orders.push_back(ngram_counts(hyp, ref, k));
    const double hl = static_cast<double>(hyp.size()), rl = static_cast<double>(ref.size());
    b.bleu1 = bleu_from_counts(std::span(orders).first(1), hl, rl);
    b.bleu2 = bleu_from_counts(std::span(orders).first(2), hl, rl);
    b.bleu3 = bleu_from_counts(std::span(orders).first(3), hl, rl);
    b.bleu4 = bleu_from_counts(orders, hl, rl);
  }
  b.meteor = meteor_lite(hyp, ref);
  b.rouge_l = rouge_l(hyp, ref);
  b.mixed_reward = weighted_sum(b, weights);
  return b;
}

double mixed_reward(std::span<const std::string> hyp, std::span<const std::string> ref,
                    const RewardWeights& weights) {
  return score_sentence(hyp, ref, weights).mixed_reward;
}

MetricBundle score_corpus(std::span<const Tokens> hyps, std::span<const Tokens> refs,
                          BleuMode mode, const RewardWeights& weights) {
  if (hyps.size() != refs.size()) throw std::invalid_argument("score_corpus: size mismatch");
  MetricBundle b;
  if (hyps.empty()) return b;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const MetricBundle s = score_sentence(hyps[i], refs[i], weights);
    b.meteor += s.meteor;
    b.rouge_l += s.rouge_l;
    if (mode == BleuMode::sentence) {
      b.bleu1 += s.bleu1;
      b.bleu2 += s.bleu2;
      b.bleu3 += s.bleu3;
      b.bleu4 += s.bleu4;
    }
  }
  // One division after summing keeps a mean of scores in [0, 1] inside [0, 1].
  const double n = static_cast<double>(hyps.size());
  b.meteor /= n;
  b.rouge_l /= n;
  if (mode == BleuMode::sentence) {
    b.bleu1 /= n;
    b.bleu2 /= n;
    b.bleu3 /= n;
    b.bleu4 /= n;
  }
  if (mode == BleuMode::corpus) {
    b.bleu1 = corpus_bleu(hyps, refs, 1);
    b.bleu2 = corpus_bleu(hyps, refs, 2);
    b.bleu3 = corpus_bleu(hyps, refs, 3);
    b.bleu4 = corpus_bleu(hyps, refs, 4);
  }
  b.mixed_reward = weighted_sum(b, weights);
  return b;
}

}  // namespace c2m::metrics
