#include "c2m/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace c2m::corpus {

using nlohmann::json;

TokenSequence normalize_report(std::string_view raw_text) {
  TokenSequence tokens;
  std::string current;
  for (char ch : raw_text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      continue;
    }
    const char lower = static_cast<char>(std::tolower(c));
    if ((lower >= 'a' && lower <= 'z') || (lower >= '0' && lower <= '9')) current.push_back(lower);
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::build(std::span<const TokenSequence> corpus, int min_count) {
  if (corpus.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, long> counts;
  for (const auto& seq : corpus) {
    for (const auto& t : seq) ++counts[t];
  }
  std::vector<std::string> kept;
  for (const auto& [token, count] : counts) {
    if (count > min_count) kept.push_back(token);
  }
  // Most frequent first, ties alphabetical, so ids do not depend on hash order.
  std::sort(kept.begin(), kept.end(), [&](const std::string& a, const std::string& b) {
    const long ca = counts.at(a);
    const long cb = counts.at(b);
    return ca != cb ? ca > cb : a < b;
  });

  std::vector<std::string> tokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
  std::unordered_map<std::string, long> freqs;
  for (auto& t : kept) {
    freqs[t] = counts.at(t);
    tokens.push_back(std::move(t));
  }
  return from_tokens(std::move(tokens), std::move(freqs), min_count);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens,
                                   std::unordered_map<std::string, long> frequencies,
                                   int min_count) {
  if (tokens.size() < kReservedCount) throw std::invalid_argument("vocabulary lacks reserved ids");
  Vocabulary v;
  v.id_to_token_ = std::move(tokens);
  for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
    if (!v.token_to_id_.emplace(v.id_to_token_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token: " + v.id_to_token_[i]);
    }
  }
  v.frequencies_ = std::move(frequencies);
  v.min_count_ = min_count;
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

long Vocabulary::frequency(const std::string& token) const {
  auto it = frequencies_.find(token);
  return it == frequencies_.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::encode(const TokenSequence& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

TokenSequence Vocabulary::decode(std::span<const int> ids) const {
  TokenSequence out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out.push_back(token(id));
  }
  return out;
}

std::vector<int> Vocabulary::encode_target(const TokenSequence& tokens, int max_len) const {
  if (max_len < 1) throw std::invalid_argument("max_len must be at least 1");
  std::vector<int> ids = encode(tokens);
  if (static_cast<int>(ids.size()) > max_len - 1) ids.resize(static_cast<std::size_t>(max_len - 1));
  ids.push_back(kEos);
  return ids;
}

// ---------------------------------------------------------------------------
// Splits

DatasetSplit split_dataset(std::span<const std::string> case_ids, SplitRatios ratios,
                           std::uint64_t seed) {
  if (case_ids.size() < 10) throw std::invalid_argument("split_dataset needs at least 10 cases");
  std::unordered_set<std::string> seen(case_ids.begin(), case_ids.end());
  if (seen.size() != case_ids.size()) throw std::invalid_argument("case ids must be unique");
  if (ratios.train <= 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");
  }

  std::vector<std::string> ids(case_ids.begin(), case_ids.end());
  Rng rng = Rng::derive(seed, "split");
  rng.shuffle(ids.begin(), ids.end());

  const double n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::floor(n * ratios.train + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));

  DatasetSplit split;
  split.seed = seed;
  split.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  split.val.assign(ids.begin() + static_cast<long>(n_train),
                   ids.begin() + static_cast<long>(n_train + n_val));
  split.test.assign(ids.begin() + static_cast<long>(n_train + n_val), ids.end());
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

FindingTemplate finding_template(int index) {
  static const FindingTemplate kPool[] = {
      {"cardiomegaly", "The heart is enlarged, consistent with cardiomegaly."},
      {"effusion", "There is a small left pleural effusion."},
      {"pneumothorax", "A right apical pneumothorax is seen."},
      {"opacity", "Patchy opacity in the right lower lobe."},
      {"edema", "Mild pulmonary edema is present."},
      {"atelectasis", "Bibasilar atelectasis is noted."},
      {"nodule", "A calcified nodule is identified."},
      {"fracture", "Healed left rib fracture."},
      {"emphysema", "The lungs are hyperinflated with emphysema."},
      {"scoliosis", "Mild thoracic scoliosis is noted."},
  };
  constexpr int kPoolSize = static_cast<int>(std::size(kPool));
  if (index < 0) throw std::out_of_range("finding index must be non-negative");
  if (index < kPoolSize) return kPool[index];
  const std::string name = "lesion" + std::to_string(index);
  return {name, "There is " + name + " present."};
}

std::string normal_sentence() { return "No acute cardiopulmonary abnormality."; }
std::string normal_keyword() { return "abnormality"; }

std::string render_report(const std::set<int>& findings) {
  if (findings.empty()) return normal_sentence();
  std::string text;
  for (int f : findings) {
    if (!text.empty()) text += ' ';
    text += finding_template(f).sentence;
  }
  return text;
}

std::string make_synthetic_ref(const std::set<int>& findings, std::uint64_t noise_seed) {
  std::string list;
  for (int f : findings) {
    if (!list.empty()) list += ',';
    list += std::to_string(f);
  }
  if (list.empty()) list = "-";
  return "synthetic:" + list + ":" + std::to_string(noise_seed);
}

std::optional<SyntheticRef> parse_synthetic_ref(std::string_view ref) {
  constexpr std::string_view kPrefix = "synthetic:";
  if (!ref.starts_with(kPrefix)) return std::nullopt;
  ref.remove_prefix(kPrefix.size());
  const auto colon = ref.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  SyntheticRef out;
  const std::string_view list = ref.substr(0, colon);
  const std::string seed(ref.substr(colon + 1));
  try {
    std::size_t used = 0;
    out.noise_seed = std::stoull(seed, &used);
    if (used != seed.size()) return std::nullopt;
    if (list != "-") {
      std::stringstream ss{std::string(list)};
      std::string item;
      while (std::getline(ss, item, ',')) {
        const int f = std::stoi(item, &used);
        if (used != item.size() || f < 0) return std::nullopt;
        out.findings.insert(f);
      }
    }
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return out;
}

std::vector<StudyCase> generate_synthetic_corpus(const SyntheticOptions& options) {
  if (options.n_cases < 1) throw std::invalid_argument("n_cases must be at least 1");
  if (options.n_findings < 2) throw std::invalid_argument("n_findings must be at least 2");
  Rng rng = Rng::derive(options.seed, "synthetic-corpus");
  std::vector<StudyCase> cases;
  cases.reserve(static_cast<std::size_t>(options.n_cases));
  for (int i = 0; i < options.n_cases; ++i) {
    std::set<int> findings;
    for (int f = 0; f < options.n_findings; ++f) {
      if (rng.bernoulli(options.finding_probability)) findings.insert(f);
    }
    StudyCase c;
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%05d", i);
    c.case_id = id;
    c.frontal_ref = make_synthetic_ref(findings, rng.next_u64() >> 1);
    c.lateral_ref = make_synthetic_ref(findings, rng.next_u64() >> 1);
    c.report = normalize_report(render_report(findings));
    c.latent_findings = findings;
    cases.push_back(std::move(c));
  }
  return cases;
}

// ---------------------------------------------------------------------------
// Files

std::string to_manifest_line(const StudyCase& c) {
  std::string report;
  for (const auto& t : c.report) {
    if (!report.empty()) report += ' ';
    report += t;
  }
  json j = {{"case_id", c.case_id},
            {"frontal_ref", c.frontal_ref},
            {"lateral_ref", c.lateral_ref},
            {"report", report}};
  if (c.latent_findings) j["findings"] = std::vector<int>(c.latent_findings->begin(), c.latent_findings->end());
  return j.dump();
}

StudyCase from_manifest_line(std::string_view line) {
  const json j = json::parse(line);
  StudyCase c;
  c.case_id = j.at("case_id").get<std::string>();
  c.frontal_ref = j.value("frontal_ref", std::string());
  c.lateral_ref = j.value("lateral_ref", std::string());
  c.report = normalize_report(j.at("report").get<std::string>());
  if (j.contains("findings")) {
    const auto f = j.at("findings").get<std::vector<int>>();
    c.latent_findings = std::set<int>(f.begin(), f.end());
  }
  return c;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, std::span<const StudyCase> cases) {
  auto out = open_out(path);
  for (const auto& c : cases) out << to_manifest_line(c) << '\n';
}

std::vector<StudyCase> read_manifest(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<StudyCase> cases;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      cases.push_back(from_manifest_line(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cases;
}

void write_split(const std::filesystem::path& path, const DatasetSplit& split) {
  json j = {{"seed", split.seed}, {"train", split.train}, {"val", split.val}, {"test", split.test}};
  open_out(path) << j.dump(1) << '\n';
}

DatasetSplit read_split(const std::filesystem::path& path) {
  auto in = open_in(path);
  const json j = json::parse(in);
  DatasetSplit s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.train = j.at("train").get<std::vector<std::string>>();
  s.val = j.at("val").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  json freqs = json::object();
  for (const auto& t : vocab.tokens()) {
    if (vocab.frequency(t) > 0) freqs[t] = vocab.frequency(t);
  }
  json j = {{"min_count", vocab.min_count()}, {"tokens", vocab.tokens()}, {"frequencies", freqs}};
  open_out(path) << j.dump(1) << '\n';
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  auto in = open_in(path);
  const json j = json::parse(in);
  return Vocabulary::from_tokens(j.at("tokens").get<std::vector<std::string>>(),
                                 j.value("frequencies", std::unordered_map<std::string, long>{}),
                                 j.value("min_count", 0));
}

std::vector<const StudyCase*> PreparedData::select(std::span<const std::string> ids) const {
  std::unordered_map<std::string, const StudyCase*> index;
  for (const auto& c : cases) index.emplace(c.case_id, &c);
  std::vector<const StudyCase*> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw std::runtime_error("unknown case id in split: " + id);
    out.push_back(it->second);
  }
  return out;
}

PreparedData prepare(std::vector<StudyCase> cases, const PrepareOptions& options) {
  PreparedData data;
  for (auto& c : cases) {
    if (c.complete()) data.cases.push_back(std::move(c));
  }
  std::vector<std::string> ids;
  for (const auto& c : data.cases) ids.push_back(c.case_id);
  data.split = split_dataset(ids, options.ratios, options.seed);

  std::vector<TokenSequence> train_reports;
  for (const auto* c : data.select(data.split.train)) train_reports.push_back(c->report);
  data.vocab = Vocabulary::build(train_reports, options.min_count);
  return data;
}

void save_prepared(const std::filesystem::path& dir, const PreparedData& data) {
  std::filesystem::create_directories(dir);
  write_manifest(dir / "manifest.jsonl", data.cases);
  write_split(dir / "split.json", data.split);
  write_vocabulary(dir / "vocab.json", data.vocab);
}

PreparedData load_prepared(const std::filesystem::path& dir) {
  PreparedData data;
  data.cases = read_manifest(dir / "manifest.jsonl");
  data.split = read_split(dir / "split.json");
  data.vocab = read_vocabulary(dir / "vocab.json");
  return data;
}

}  // namespace c2m::corpus
