#include "c2m/metrics.hpp"
#include "c2m/rng.hpp"
#include "oracle/metric_oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace c2m;
using metrics::Tokens;

namespace {

std::vector<Tokens> read_lines(const std::string& path) {
  std::ifstream in(path);
  EXPECT_TRUE(in.good()) << path;
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    Tokens t;
    for (std::string w; ss >> w;) t.push_back(w);
    out.push_back(t);
  }
  return out;
}

Tokens random_sentence(Rng& rng, std::size_t max_len) {
  static const Tokens words = {"a", "b", "c", "d", "e", "effusion", "effusions", "noted", "noting"};
  Tokens t(rng.index(max_len + 1));
  for (auto& w : t) w = words[rng.index(words.size())];
  return t;
}

}  // namespace

TEST(Bleu, IdentityIsOneForAllOrders) {
  const Tokens s = {"the", "heart", "is", "normal", "in", "size"};
  for (int n = 1; n <= 4; ++n) EXPECT_DOUBLE_EQ(metrics::bleu(s, s, n), 1.0);
}

TEST(Bleu, HandCountedUnigramPrecision) {
  EXPECT_NEAR(metrics::bleu(Tokens{"the", "cat", "sat"}, Tokens{"the", "cat"}, 1), 2.0 / 3.0, 1e-12);
}

TEST(Bleu, ClippingCountsEachReferenceOccurrenceOnce) {
  const auto c = metrics::ngram_counts(Tokens{"a", "a", "a"}, Tokens{"a"}, 1);
  EXPECT_EQ(c.matches, 1);
  EXPECT_EQ(c.total, 3);
  // BP = exp(1 - 1/3) caps at 1 since the hypothesis is longer.
  EXPECT_NEAR(metrics::bleu(Tokens{"a", "a", "a"}, Tokens{"a"}, 1), 1.0 / 3.0, 1e-12);
}

TEST(Bleu, EmptyHypothesisScoresZero) {
  EXPECT_EQ(metrics::bleu(Tokens{}, Tokens{"a"}, 4), 0.0);
  EXPECT_EQ(metrics::rouge_l(Tokens{}, Tokens{"a"}), 0.0);
  EXPECT_EQ(metrics::meteor_lite(Tokens{}, Tokens{"a"}), 0.0);
  EXPECT_EQ(metrics::mixed_reward(Tokens{}, Tokens{"a", "b"}), 0.0);
}

TEST(Bleu, RejectsOrdersOutsideOneToFour) {
  EXPECT_THROW(metrics::bleu(Tokens{"a"}, Tokens{"a"}, 0), std::invalid_argument);
  EXPECT_THROW(metrics::bleu(Tokens{"a"}, Tokens{"a"}, 5), std::invalid_argument);
}

TEST(Bleu, ShorteningAPerfectHypothesisStrictlyLowersBleu4) {
  const Tokens ref = {"the", "lungs", "are", "clear", "no", "pleural", "effusion", "is", "seen"};
  double previous = metrics::bleu(ref, ref, 4);
  for (std::size_t len = ref.size() - 1; len >= 1; --len) {
    const Tokens hyp(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(len));
    const double b = metrics::bleu(hyp, ref, 4);
    EXPECT_LT(b, previous) << "length " << len;
    previous = b;
  }
}

TEST(RougeL, HandDerivedLcsExample) {
  EXPECT_EQ(metrics::lcs_length(Tokens{"a", "b", "c", "d"}, Tokens{"a", "c", "d"}), 3u);
  const double p = 0.75, r = 1.0, b2 = 1.44;
  const double expected = (1 + b2) * p * r / (r + b2 * p);
  EXPECT_NEAR(metrics::rouge_l(Tokens{"a", "b", "c", "d"}, Tokens{"a", "c", "d"}), expected, 1e-12);
  EXPECT_NEAR(expected, 0.8798, 1e-4);
}

TEST(RougeL, IdentityAndDisjoint) {
  const Tokens s = {"x", "y", "z"};
  EXPECT_DOUBLE_EQ(metrics::rouge_l(s, s), 1.0);
  EXPECT_EQ(metrics::rouge_l(s, Tokens{"p", "q"}), 0.0);
}

TEST(Meteor, OrderSwapGivesHalf) {
  const auto a = metrics::meteor_align(Tokens{"the", "cat"}, Tokens{"cat", "the"});
  EXPECT_EQ(a.pairs.size(), 2u);
  EXPECT_EQ(a.chunks, 2u);
  EXPECT_DOUBLE_EQ(metrics::meteor_lite(Tokens{"the", "cat"}, Tokens{"cat", "the"}), 0.5);
}

TEST(Meteor, IdentityUsesOneChunk) {
  for (std::size_t n = 1; n <= 8; ++n) {
    Tokens s;
    for (std::size_t i = 0; i < n; ++i) s.push_back("w" + std::to_string(i));
    const double nn = static_cast<double>(n);
    EXPECT_NEAR(metrics::meteor_lite(s, s), 1.0 - 0.5 / (nn * nn * nn), 1e-15);
  }
}

TEST(Meteor, StemStageMatchesInflections) {
  const auto a = metrics::meteor_align(Tokens{"effusions", "noted"}, Tokens{"effusion", "noting"});
  EXPECT_EQ(a.pairs.size(), 2u);
  EXPECT_EQ(metrics::meteor_lite(Tokens{"abc"}, Tokens{"xyz"}), 0.0);
}

TEST(Meteor, StemmerLeavesShortWordsAlone) {
  EXPECT_EQ(metrics::stem("is"), "is");
  EXPECT_EQ(metrics::stem("lungs"), "lung");
  EXPECT_EQ(metrics::stem("noted"), "not");
  EXPECT_EQ(metrics::stem("mildly"), "mild");
}

TEST(MixedReward, WeightsAreTwoTwoOneOneTwoTwo) {
  const metrics::RewardWeights w;
  const std::array<double, 6> expected{2, 2, 1, 1, 2, 2};
  EXPECT_EQ(w.w, expected);
}

TEST(MixedReward, IdenticalSentencesScoreCloseToTen) {
  const Tokens s = {"no", "acute", "cardiopulmonary", "abnormality"};
  const double r = metrics::mixed_reward(s, s);
  EXPECT_NEAR(r, 10.0 - 2.0 * 0.5 / 64.0, 1e-12);
  EXPECT_LT(r, 10.0);
}

TEST(MetricProperties, AllMetricsStayInUnitInterval) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const Tokens h = random_sentence(rng, 10);
    Tokens r = random_sentence(rng, 10);
    if (r.empty()) r.push_back("a");
    const auto b = metrics::score_sentence(h, r);
    for (double v : {b.bleu1, b.bleu2, b.bleu3, b.bleu4, b.meteor, b.rouge_l}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-15);
    }
    EXPECT_NEAR(b.mixed_reward, metrics::weighted_sum(b, {}), 1e-12);
  }
}

TEST(MetricProperties, RandomPairsMatchNaiveOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const Tokens h = random_sentence(rng, 12);
    Tokens r = random_sentence(rng, 12);
    if (r.empty()) r.push_back("b");
    for (std::size_t n = 1; n <= 4; ++n) {
      ASSERT_NEAR(metrics::bleu(h, r, static_cast<int>(n)), oracle::naive_bleu(h, r, n), 1e-12);
    }
    ASSERT_EQ(metrics::lcs_length(h, r), oracle::brute_force_lcs(h, r));
    ASSERT_NEAR(metrics::rouge_l(h, r), oracle::naive_rouge_l(h, r), 1e-12);
    ASSERT_NEAR(metrics::meteor_lite(h, r), oracle::naive_meteor(h, r), 1e-12);
  }
}

TEST(GoldenCorpus, MatchesNaiveOracleToOneNanoth) {
  const auto hyps = read_lines(std::string(C2M_TEST_DATA_DIR) + "/golden_hyp.txt");
  const auto refs = read_lines(std::string(C2M_TEST_DATA_DIR) + "/golden_ref.txt");
  ASSERT_EQ(hyps.size(), 50u);
  ASSERT_EQ(refs.size(), 50u);
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    for (std::size_t n = 1; n <= 4; ++n) {
      EXPECT_NEAR(metrics::bleu(hyps[i], refs[i], static_cast<int>(n)),
                  oracle::naive_bleu(hyps[i], refs[i], n), 1e-9);
    }
    EXPECT_NEAR(metrics::rouge_l(hyps[i], refs[i]), oracle::naive_rouge_l(hyps[i], refs[i]), 1e-9);
    EXPECT_NEAR(metrics::meteor_lite(hyps[i], refs[i]), oracle::naive_meteor(hyps[i], refs[i]), 1e-9);
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    EXPECT_NEAR(metrics::corpus_bleu(hyps, refs, static_cast<int>(n)),
                oracle::naive_corpus_bleu(hyps, refs, n), 1e-9);
  }
}

TEST(CorpusScores, SentenceModeAveragesAndCorpusModePools) {
  const std::vector<Tokens> h = {{"a", "b", "c"}, {"x"}};
  const std::vector<Tokens> r = {{"a", "b", "c"}, {"x", "y", "z"}};
  const auto sentence = metrics::score_corpus(h, r, metrics::BleuMode::sentence);
  EXPECT_NEAR(sentence.bleu1,
              0.5 * (metrics::bleu(h[0], r[0], 1) + metrics::bleu(h[1], r[1], 1)), 1e-12);
  const auto pooled = metrics::score_corpus(h, r, metrics::BleuMode::corpus);
  EXPECT_NEAR(pooled.bleu1, std::exp(1.0 - 6.0 / 4.0), 1e-12);
  EXPECT_NEAR(pooled.rouge_l, sentence.rouge_l, 1e-15);
}

TEST(CorpusScores, PerfectCorpusScoresExactlyOne) {
  Rng rng(11);
  std::vector<Tokens> h;
  for (int i = 0; i < 100; ++i) {
    Tokens t = random_sentence(rng, 12);
    t.push_back("end");
    h.push_back(t);
  }
  for (auto mode : {metrics::BleuMode::sentence, metrics::BleuMode::corpus}) {
    const auto b = metrics::score_corpus(h, h, mode);
    EXPECT_EQ(b.rouge_l, 1.0);
    EXPECT_EQ(b.bleu1, 1.0);
    EXPECT_LE(b.meteor, 1.0);
  }
}
