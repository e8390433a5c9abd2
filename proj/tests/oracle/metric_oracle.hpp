#pragma once

// Deliberately naive reference implementations of the NLG metrics: n-grams
// compared element by element, LCS by enumerating every subsequence of the
// hypothesis, METEOR alignment by scanning occurrence counts.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace c2m::oracle {

using Words = std::vector<std::string>;

inline Words slice(const Words& s, std::size_t start, std::size_t n) {
  return Words(s.begin() + static_cast<std::ptrdiff_t>(start),
               s.begin() + static_cast<std::ptrdiff_t>(start + n));
}

inline long occurrences(const Words& s, const Words& gram) {
  long count = 0;
  if (s.size() < gram.size()) return 0;
  for (std::size_t i = 0; i + gram.size() <= s.size(); ++i) {
    if (slice(s, i, gram.size()) == gram) ++count;
  }
  return count;
}

/// Clipped matches and total n-gram count of order n.
inline std::pair<long, long> naive_ngram(const Words& hyp, const Words& ref, std::size_t n) {
  long matches = 0, total = 0;
  if (hyp.size() < n) return {0, 0};
  std::vector<Words> seen;
  for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
    ++total;
    const Words g = slice(hyp, i, n);
    bool dup = false;
    for (const auto& s : seen) dup = dup || s == g;
    if (dup) continue;
    seen.push_back(g);
    matches += std::min(occurrences(hyp, g), occurrences(ref, g));
  }
  return {matches, total};
}

inline double naive_bleu_from(const std::vector<std::pair<long, long>>& orders, double c, double r) {
  if (c == 0.0) return 0.0;
  double product = 1.0;
  for (std::size_t k = 0; k < orders.size(); ++k) {
    double m = static_cast<double>(orders[k].first), t = static_cast<double>(orders[k].second);
    if (orders[k].first == 0) {
      if (k == 0) return 0.0;
      m += 1.0;
      t += 1.0;
    }
    product *= m / t;
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::pow(product, 1.0 / static_cast<double>(orders.size()));
}

inline double naive_bleu(const Words& hyp, const Words& ref, std::size_t n) {
  std::vector<std::pair<long, long>> orders;
  for (std::size_t k = 1; k <= n; ++k) orders.push_back(naive_ngram(hyp, ref, k));
  return naive_bleu_from(orders, static_cast<double>(hyp.size()), static_cast<double>(ref.size()));
}

inline double naive_corpus_bleu(const std::vector<Words>& hyps, const std::vector<Words>& refs,
                                std::size_t n) {
  std::vector<std::pair<long, long>> orders(n, {0, 0});
  double c = 0.0, r = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    c += static_cast<double>(hyps[i].size());
    r += static_cast<double>(refs[i].size());
    for (std::size_t k = 1; k <= n; ++k) {
      const auto [m, t] = naive_ngram(hyps[i], refs[i], k);
      orders[k - 1].first += m;
      orders[k - 1].second += t;
    }
  }
  return naive_bleu_from(orders, c, r);
}

inline bool is_subsequence(const Words& sub, const Words& s) {
  std::size_t j = 0;
  for (std::size_t i = 0; i < s.size() && j < sub.size(); ++i) {
    if (s[i] == sub[j]) ++j;
  }
  return j == sub.size();
}

/// Exhaustive over the 2^|hyp| subsequences of the hypothesis (|hyp| <= 20).
inline std::size_t brute_force_lcs(const Words& hyp, const Words& ref) {
  if (hyp.size() > 20) throw std::invalid_argument("brute_force_lcs: hypothesis too long");
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << hyp.size()); ++mask) {
    Words sub;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(hyp[i]);
    }
    if (sub.size() > best && is_subsequence(sub, ref)) best = sub.size();
  }
  return best;
}

inline double naive_rouge_l(const Words& hyp, const Words& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const double lcs = static_cast<double>(brute_force_lcs(hyp, ref));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(hyp.size());
  const double r = lcs / static_cast<double>(ref.size());
  return (1.0 + 1.44) * p * r / (r + 1.44 * p);
}

/// Same light stemmer contract as the library: strip the first matching
/// suffix of ing/ed/ly/es/s when at least three characters remain.
inline std::string naive_stem(const std::string& w) {
  for (const std::string suffix : {"ing", "ed", "ly", "es", "s"}) {
    if (w.size() >= suffix.size() + 3 && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return w.substr(0, w.size() - suffix.size());
    }
  }
  return w;
}

inline double naive_meteor(const Words& hyp, const Words& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  std::vector<int> hyp_to_ref(hyp.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);
  for (int stage = 0; stage < 2; ++stage) {
    auto key = [stage](const std::string& w) { return stage == 0 ? w : naive_stem(w); };
    // Walk hypothesis tokens in order; each takes the first free reference
    // slot with the same key.
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      if (hyp_to_ref[i] >= 0) continue;
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (!ref_used[j] && key(ref[j]) == key(hyp[i])) {
          hyp_to_ref[i] = static_cast<int>(j);
          ref_used[j] = true;
          break;
        }
      }
    }
  }
  double m = 0.0, chunks = 0.0;
  int prev_h = -2, prev_r = -2;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (hyp_to_ref[i] < 0) continue;
    m += 1.0;
    if (!(static_cast<int>(i) == prev_h + 1 && hyp_to_ref[i] == prev_r + 1)) chunks += 1.0;
    prev_h = static_cast<int>(i);
    prev_r = hyp_to_ref[i];
  }
  if (m == 0.0) return 0.0;
  const double p = m / static_cast<double>(hyp.size());
  const double r = m / static_cast<double>(ref.size());
  const double f = 10.0 * p * r / (r + 9.0 * p);
  return f * (1.0 - 0.5 * std::pow(chunks / m, 3.0));
}

}  // namespace c2m::oracle
