#pragma once

#include "c2m/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace c2m::corpus {

using TokenSequence = std::vector<std::string>;

/// One patient study: two image references and its report.
struct StudyCase {
  std::string case_id;
  std::string frontal_ref;
  std::string lateral_ref;
  TokenSequence report;
  /// Finding labels; populated only by the synthetic backend.
  std::optional<std::set<int>> latent_findings;

  bool complete() const { return !frontal_ref.empty() && !lateral_ref.empty() && !report.empty(); }
};

/// Lowercases, strips every character outside [a-z0-9 ] and splits on
/// whitespace. All-special input yields an empty sequence.
TokenSequence normalize_report(std::string_view raw_text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReservedCount = 4;

  /// Keeps tokens whose training-corpus count is strictly greater than
  /// `min_count`. Throws on an empty corpus.
  static Vocabulary build(std::span<const TokenSequence> corpus, int min_count = 5);
  /// Rebuilds from an id-ordered token list (reserved tokens first).
  static Vocabulary from_tokens(std::vector<std::string> tokens,
                                std::unordered_map<std::string, long> frequencies = {},
                                int min_count = 0);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return token_to_id_.contains(token); }
  long frequency(const std::string& token) const;
  int min_count() const { return min_count_; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::vector<int> encode(const TokenSequence& tokens) const;
  /// Stops at the first EOS; PAD and BOS are skipped.
  TokenSequence decode(std::span<const int> ids) const;

  /// Target ids for teacher forcing: content tokens then EOS, truncated so the
  /// whole sequence (EOS included) has at most `max_len` entries.
  std::vector<int> encode_target(const TokenSequence& tokens, int max_len) const;

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, long> frequencies_;
  int min_count_ = 0;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

/// Seeded shuffle, then floor(n * ratio) cases for train and val; test takes
/// the remainder (3111 cases -> 2177/311/623). Throws on fewer than 10 cases
/// or duplicate ids.
DatasetSplit split_dataset(std::span<const std::string> case_ids, SplitRatios ratios,
                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic multi-view corpus.

/// Name and report sentence for finding `index`.
struct FindingTemplate {
  std::string name;
  std::string sentence;
};

FindingTemplate finding_template(int index);
/// Sentence rendered when a case has no findings.
std::string normal_sentence();
/// Keyword token that marks the normal sentence.
std::string normal_keyword();

/// Raw (un-normalized) report text for a finding set, findings in index order.
std::string render_report(const std::set<int>& findings);

struct SyntheticOptions {
  int n_cases = 500;
  int n_findings = 6;
  std::uint64_t seed = 0;
  double finding_probability = 0.3;
};

std::vector<StudyCase> generate_synthetic_corpus(const SyntheticOptions& options);

/// Image reference understood by the synthetic backends:
///   "synthetic:<comma-separated finding indices or ->:<noise seed>"
std::string make_synthetic_ref(const std::set<int>& findings, std::uint64_t noise_seed);

struct SyntheticRef {
  std::set<int> findings;
  std::uint64_t noise_seed = 0;
};

/// Returns nullopt when `ref` is not a synthetic reference.
std::optional<SyntheticRef> parse_synthetic_ref(std::string_view ref);

// ---------------------------------------------------------------------------
// Manifest I/O: one JSON object per line with case_id, frontal_ref,
// lateral_ref, report (and an optional findings array).

std::string to_manifest_line(const StudyCase& c);
/// Report text is normalized on read.
StudyCase from_manifest_line(std::string_view line);

void write_manifest(const std::filesystem::path& path, std::span<const StudyCase> cases);
std::vector<StudyCase> read_manifest(const std::filesystem::path& path);

void write_split(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_split(const std::filesystem::path& path);

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary read_vocabulary(const std::filesystem::path& path);

/// A prepared data directory: manifest.jsonl, split.json, vocab.json.
struct PreparedData {
  std::vector<StudyCase> cases;
  DatasetSplit split;
  Vocabulary vocab;

  std::vector<const StudyCase*> select(std::span<const std::string> ids) const;
};

struct PrepareOptions {
  SplitRatios ratios;
  std::uint64_t seed = 0;
  int min_count = 5;
};

/// Drops incomplete cases, splits, and builds the vocabulary from train only.
PreparedData prepare(std::vector<StudyCase> cases, const PrepareOptions& options);
void save_prepared(const std::filesystem::path& dir, const PreparedData& data);
PreparedData load_prepared(const std::filesystem::path& dir);

}  // namespace c2m::corpus
