#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace c2m::metrics {

using Tokens = std::vector<std::string>;

struct MetricBundle {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  double mixed_reward = 0.0;
};

/// BLEU-1..4, METEOR, ROUGE-L weights of the mixed reward.
struct RewardWeights {
  std::array<double, 6> w{2.0, 2.0, 1.0, 1.0, 2.0, 2.0};
};

/// Clipped n-gram matches and hypothesis n-gram count for one order.
struct NgramCounts {
  long matches = 0;
  long total = 0;
};

NgramCounts ngram_counts(std::span<const std::string> hyp, std::span<const std::string> ref, int n);

/// Sentence BLEU with orders 1..n, uniform weights, add-one smoothing on
/// zero-match orders >= 2, brevity penalty exp(min(0, 1 - |ref|/|hyp|)).
/// Empty hypothesis scores 0.
double bleu(std::span<const std::string> hyp, std::span<const std::string> ref, int n);

/// Corpus BLEU: n-gram counts and lengths pooled over all pairs first.
double corpus_bleu(std::span<const Tokens> hyps, std::span<const Tokens> refs, int n);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// LCS F-measure with recall weight beta = 1.2.
double rouge_l(std::span<const std::string> hyp, std::span<const std::string> ref);

/// Light suffix stripper used by the METEOR stem stage.
std::string stem(std::string_view token);

struct Alignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (hyp index, ref index), by hyp index
  std::size_t chunks = 0;
};

/// Exact stage then stem stage. Within a stage the k-th unaligned occurrence
/// of a key in the hypothesis aligns to its k-th unaligned occurrence in the
/// reference.
Alignment meteor_align(std::span<const std::string> hyp, std::span<const std::string> ref);

/// F_mean * (1 - 0.5 (chunks / matches)^3), F_mean = 10PR / (R + 9P).
double meteor_lite(std::span<const std::string> hyp, std::span<const std::string> ref);

/// Per-pair bundle; BLEU here is sentence-level.
MetricBundle score_sentence(std::span<const std::string> hyp, std::span<const std::string> ref,
                            const RewardWeights& weights = {});

double mixed_reward(std::span<const std::string> hyp, std::span<const std::string> ref,
                    const RewardWeights& weights = {});

enum class BleuMode { corpus, sentence };

/// Corpus scores: BLEU pooled (corpus mode) or sentence-averaged; METEOR and
/// ROUGE-L averaged over pairs. mixed_reward is the weighted sum of the bundle.
MetricBundle score_corpus(std::span<const Tokens> hyps, std::span<const Tokens> refs,
                          BleuMode mode = BleuMode::corpus, const RewardWeights& weights = {});

double weighted_sum(const MetricBundle& b, const RewardWeights& weights);

}  // namespace c2m::metrics
