#pragma once

#include "c2m/cmc.hpp"
#include "c2m/dot.hpp"
#include "c2m/generator.hpp"
#include "c2m/metrics.hpp"
#include "c2m/mvco.hpp"
#include "c2m/vision.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace c2m::harness {

/// Generation-branch input when DoT is disabled.
enum class InputMode { cat, fused };

InputMode parse_input_mode(std::string_view s);
std::string_view to_string(InputMode m);

struct DataConfig {
  int n_cases = 500;
  int n_findings = 6;
  double finding_probability = 0.3;
  int min_count = 5;
};

struct ModelConfig {
  int d_model = 1024;
  int heads = 8;
  int encoder_layers = 4;
  int decoder_layers = 4;
  int d_ff = 0;
  int max_len = 60;
};

struct PretrainConfig {
  int batch_size = 6;
  int epochs = 60;
  double lr = 1e-4;
  /// Linear warm-up, then inverse-square-root decay.
  int warmup_steps = 10000;
  double clip_norm = 1.0;
};

struct RlConfig {
  int batch_size = 2;
  int epochs = 60;
  double lr = 1e-5;
  /// Cosine annealing period in epochs (restarts every period).
  int period = 15;
  /// Keep the MvCo/CMC terms active next to the policy-gradient loss.
  bool keep_aux_losses = false;
};

struct EvalConfig {
  int beam_size = 2;
  metrics::BleuMode bleu_mode = metrics::BleuMode::corpus;
};

struct TrainConfig {
  std::string profile = "paper";
  std::uint64_t seed = 0;
  DataConfig data;
  vision::VisionConfig vision;
  ModelConfig model;
  InputMode input_mode = InputMode::fused;
  PretrainConfig pretrain;
  RlConfig rl;
  mvco::MvcoConfig mvco;
  dot::DotConfig dot;
  cmc::CmcConfig cmc;
  EvalConfig eval;
  metrics::RewardWeights reward;
};

/// "paper": the published scale. "toy": desk-scale overrides (d_model 64,
/// batch 8, 500 synthetic cases).
TrainConfig profile_defaults(std::string_view profile);

/// Every dotted key accepted by set_value and emitted by to_json.
std::vector<std::string> config_keys();

/// Throws std::invalid_argument for unknown keys or unparsable values. The
/// string form parses numbers and booleans as JSON literals.
void set_from_string(TrainConfig& config, std::string_view key, std::string_view value);
void set_value(TrainConfig& config, std::string_view key, const nlohmann::json& value);

/// Flat object keyed by dotted names.
nlohmann::json to_json(const TrainConfig& config);
/// Starts from `base` (or the file's "profile" defaults) and applies every key.
TrainConfig from_json(const nlohmann::json& flat);
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TrainConfig& config);

/// Throws std::invalid_argument on non-positive rates or inconsistent flags.
void validate(const TrainConfig& config);

generator::GeneratorConfig generator_config(const TrainConfig& config, int vocab_size);

/// FNV-1a over the keys that determine parameter shapes, plus the vocabulary.
std::uint64_t structure_hash(const TrainConfig& config, const std::vector<std::string>& vocab_tokens);

/// Linear warm-up then inverse-square-root decay; step counts from 1.
double noam_lr(double base, int warmup_steps, long step);
/// Cosine annealing within each period, restarting at every multiple of it.
double cosine_lr(double base, int period, int epoch);

}  // namespace c2m::harness
