#pragma once

#include "c2m/dot.hpp"
#include "c2m/harness/config.hpp"
#include "c2m/metrics.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace c2m::harness {

struct EpochStats {
  std::string phase;  // "pretrain" or "rl"
  int epoch = 0;
  long steps = 0;
  double lr = 0.0;
  double ce = 0.0;
  double mvco = 0.0;
  double cmc = 0.0;
  double total = 0.0;
  /// RL only: mean sampled and greedy-baseline rewards.
  double sample_reward = 0.0;
  double baseline_reward = 0.0;
  std::array<long, dot::kActions> actions{};
};

struct EvalResult {
  std::string split;
  dot::AvailableViews views = dot::AvailableViews::both;
  metrics::MetricBundle bundle;
  long evaluated = 0;
  long skipped = 0;
  std::array<long, dot::kActions> actions{};
};

/// Relative gap |M_both - M_view| / M_both of BLEU-4 (0 when M_both is 0).
double relative_gap(const EvalResult& both, const EvalResult& single);

/// Append-only record of one command. Holds no timestamps, so identical
/// inputs produce byte-identical files.
struct RunRecord {
  std::string command;
  std::string variant;
  TrainConfig config;
  std::vector<EpochStats> epochs;
  std::vector<EvalResult> evaluations;
  std::vector<std::string> checkpoints;
  nlohmann::json notes = nlohmann::json::object();

  const EvalResult* find_eval(const std::string& split, dot::AvailableViews views) const;
};

nlohmann::json to_json(const metrics::MetricBundle& b);
nlohmann::json to_json(const EpochStats& e);
nlohmann::json to_json(const EvalResult& e);
nlohmann::json to_json(const RunRecord& r);

/// Writes run_record.json and epochs.csv into `dir`.
void write_run_record(const std::filesystem::path& dir, const RunRecord& r);
std::string epochs_csv(const RunRecord& r);

}  // namespace c2m::harness
