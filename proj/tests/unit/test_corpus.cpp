#include "c2m/corpus.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

using namespace c2m::corpus;

namespace {

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("case" + std::to_string(i));
  return out;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("c2m_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_report("No Acute Disease."), (TokenSequence{"no", "acute", "disease"}));
  EXPECT_TRUE(normalize_report("").empty());
  EXPECT_EQ(normalize_report("X-RAY:  clear"), (TokenSequence{"xray", "clear"}));
  EXPECT_TRUE(normalize_report("!!! ??? ...").empty());
  EXPECT_EQ(normalize_report("T2\tspine\nok"), (TokenSequence{"t2", "spine", "ok"}));
}

TEST(Vocabulary, StrictThresholdAndUnk) {
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 7; ++i) corpus.push_back({"opacity"});
  for (int i = 0; i < 2; ++i) corpus.push_back({"rare"});
  for (int i = 0; i < 5; ++i) corpus.push_back({"edge"});
  const auto v = Vocabulary::build(corpus, 5);
  EXPECT_TRUE(v.contains("opacity"));
  EXPECT_FALSE(v.contains("rare"));
  EXPECT_FALSE(v.contains("edge"));
  EXPECT_EQ(v.id("rare"), Vocabulary::kUnk);
  EXPECT_EQ(v.encode({"rare", "never-seen"}), (std::vector<int>{Vocabulary::kUnk, Vocabulary::kUnk}));
  EXPECT_EQ(v.size(), Vocabulary::kReservedCount + 1);
  EXPECT_EQ(v.frequency("opacity"), 7);
}

TEST(Vocabulary, ReservedIdsAndInverseMaps) {
  std::vector<TokenSequence> corpus(6, TokenSequence{"a", "b", "c"});
  const auto v = Vocabulary::build(corpus, 5);
  EXPECT_EQ(v.id(v.token(Vocabulary::kPad)), 0);
  EXPECT_EQ(v.id(v.token(Vocabulary::kBos)), 1);
  EXPECT_EQ(v.id(v.token(Vocabulary::kEos)), 2);
  EXPECT_EQ(v.id(v.token(Vocabulary::kUnk)), 3);
  for (int i = 0; i < v.size(); ++i) EXPECT_EQ(v.id(v.token(i)), i);
  for (int i = Vocabulary::kReservedCount; i < v.size(); ++i) EXPECT_GT(v.frequency(v.token(i)), 5);
  EXPECT_THROW(Vocabulary::build(std::vector<TokenSequence>{}, 5), std::invalid_argument);
}

TEST(Vocabulary, EncodeDecodeRoundTripOnSyntheticReports) {
  const auto cases = generate_synthetic_corpus({200, 6, 3, 0.3});
  std::vector<TokenSequence> reports;
  for (const auto& c : cases) reports.push_back(c.report);
  const auto v = Vocabulary::build(reports, 0);
  for (const auto& r : reports) {
    const auto enc = v.encode(r);
    EXPECT_EQ(v.decode(enc), r);
    EXPECT_EQ(std::count(enc.begin(), enc.end(), Vocabulary::kUnk), 0);
  }
}

TEST(Vocabulary, TargetEncodingTruncatesWithEos) {
  std::vector<TokenSequence> corpus(6, TokenSequence{"a", "b", "c", "d"});
  const auto v = Vocabulary::build(corpus, 5);
  const auto t = v.encode_target({"a", "b", "c", "d"}, 3);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t.back(), Vocabulary::kEos);
  EXPECT_EQ(v.decode(t), (TokenSequence{"a", "b"}));
  EXPECT_EQ(v.encode_target({"a"}, 60).size(), 2u);
}

TEST(Split, SizesFollowFloorThenRemainder) {
  const auto s100 = split_dataset(ids(100), {}, 1);
  EXPECT_EQ(s100.train.size(), 70u);
  EXPECT_EQ(s100.val.size(), 10u);
  EXPECT_EQ(s100.test.size(), 20u);
  const auto s = split_dataset(ids(3111), {}, 1);
  EXPECT_EQ(s.train.size(), 2177u);
  EXPECT_EQ(s.val.size(), 311u);
  EXPECT_EQ(s.test.size(), 623u);
}

TEST(Split, DeterministicDisjointCover) {
  const auto all = ids(257);
  const auto a = split_dataset(all, {}, 9);
  const auto b = split_dataset(all, {}, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, split_dataset(all, {}, 10).train);
  std::set<std::string> seen;
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    for (const auto& id : *part) EXPECT_TRUE(seen.insert(id).second) << id;
  }
  EXPECT_EQ(seen.size(), all.size());
}

TEST(Split, Errors) {
  EXPECT_THROW(split_dataset(ids(9), {}, 0), std::invalid_argument);
  auto dup = ids(20);
  dup[5] = dup[6];
  EXPECT_THROW(split_dataset(dup, {}, 0), std::invalid_argument);
}

TEST(Synthetic, ByteIdenticalForSameSeed) {
  const auto a = generate_synthetic_corpus({4, 6, 7, 0.3});
  const auto b = generate_synthetic_corpus({4, 6, 7, 0.3});
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_manifest_line(a[i]), to_manifest_line(b[i]));
}

TEST(Synthetic, ViewsShareLatentFindings) {
  for (const auto& c : generate_synthetic_corpus({100, 6, 1, 0.3})) {
    ASSERT_TRUE(c.complete());
    const auto f = parse_synthetic_ref(c.frontal_ref);
    const auto l = parse_synthetic_ref(c.lateral_ref);
    ASSERT_TRUE(f && l);
    EXPECT_EQ(f->findings, l->findings);
    EXPECT_EQ(f->findings, *c.latent_findings);
  }
}

TEST(Synthetic, TemplateRuleForSingleFinding) {
  const auto report = normalize_report(render_report({0}));
  const auto own = normalize_report(finding_template(0).sentence);
  EXPECT_NE(std::search(report.begin(), report.end(), own.begin(), own.end()), report.end());
  for (int k = 1; k < 10; ++k) {
    const auto other = normalize_report(finding_template(k).sentence);
    EXPECT_EQ(std::search(report.begin(), report.end(), other.begin(), other.end()), report.end()) << k;
  }
  EXPECT_EQ(finding_template(0).name, "cardiomegaly");
  EXPECT_EQ(normalize_report(render_report({})), normalize_report(normal_sentence()));
}

TEST(Synthetic, RefRoundTrip) {
  const auto ref = make_synthetic_ref({1, 4}, 99);
  const auto parsed = parse_synthetic_ref(ref);
  ASSERT_TRUE(parsed);
  EXPECT_EQ(parsed->findings, (std::set<int>{1, 4}));
  EXPECT_EQ(parsed->noise_seed, 99u);
  EXPECT_EQ(parse_synthetic_ref(make_synthetic_ref({}, 5))->findings.size(), 0u);
  EXPECT_FALSE(parse_synthetic_ref("/images/cxr1.png"));
}

TEST(Manifest, LineRoundTripAndNormalization) {
  const auto c = generate_synthetic_corpus({1, 6, 2, 0.5})[0];
  const auto back = from_manifest_line(to_manifest_line(c));
  EXPECT_EQ(back.case_id, c.case_id);
  EXPECT_EQ(back.frontal_ref, c.frontal_ref);
  EXPECT_EQ(back.report, c.report);
  EXPECT_EQ(back.latent_findings, c.latent_findings);
  const auto raw = from_manifest_line(
      R"({"case_id":"x","frontal_ref":"f","lateral_ref":"l","report":"Heart Size NORMAL."})");
  EXPECT_EQ(raw.report, (TokenSequence{"heart", "size", "normal"}));
}

TEST(Prepare, DropsIncompleteCasesAndBuildsVocabFromTrain) {
  auto cases = generate_synthetic_corpus({60, 6, 4, 0.3});
  cases[0].lateral_ref.clear();
  cases[1].report.clear();
  const auto data = prepare(cases, {{}, 4, 0});
  EXPECT_EQ(data.cases.size(), 58u);
  EXPECT_EQ(data.split.train.size() + data.split.val.size() + data.split.test.size(), 58u);

  const auto dir = temp_dir("prepare");
  save_prepared(dir, data);
  const auto loaded = load_prepared(dir);
  EXPECT_EQ(loaded.vocab.tokens(), data.vocab.tokens());
  EXPECT_EQ(loaded.split.train, data.split.train);
  ASSERT_EQ(loaded.cases.size(), data.cases.size());
  EXPECT_EQ(to_manifest_line(loaded.cases[3]), to_manifest_line(data.cases[3]));
  std::filesystem::remove_all(dir);
}
