#pragma once

#include "c2m/corpus.hpp"
#include "c2m/harness/config.hpp"
#include "c2m/harness/model.hpp"
#include "c2m/harness/run_record.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace c2m::harness {

using CaseBatch = std::span<const corpus::StudyCase* const>;

/// Loss terms of one mini-batch. Disabled or skipped terms are undefined
/// tensors and do not enter `total`.
struct BatchLosses {
  ag::Tensor ce;
  ag::Tensor mvco;
  ag::Tensor cmc;
  ag::Tensor total;
  std::array<long, dot::kActions> actions{};
};

struct StepStats {
  double ce = 0.0;
  double mvco = 0.0;
  double cmc = 0.0;
  double total = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double sample_reward = 0.0;
  double baseline_reward = 0.0;
  std::array<long, dot::kActions> actions{};
};

/// Self-critical advantages: sampled reward minus greedy reward, per case.
std::vector<double> scst_advantages(std::span<const double> sample_rewards,
                                    std::span<const double> baseline_rewards);

/// Owns the model, optimizer and every random stream of one run. All
/// randomness is derived from config.seed: shuffling, DoT sampling and RL
/// sampling each have their own stream.
class Trainer {
 public:
  Trainer(TrainConfig config, const corpus::PreparedData& data);

  const TrainConfig& config() const { return config_; }
  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const CaseInputs& inputs() const { return inputs_; }
  const corpus::PreparedData& data() const { return data_; }
  long pretrain_steps() const { return pretrain_steps_; }

  /// Pretraining objective CE + w_mvco MvCo + w_cmc CMC over one batch. With
  /// include_ce false only the auxiliary terms are built.
  BatchLosses batch_losses(CaseBatch batch, bool include_ce = true);

  /// One optimizer step on `batch` with the Noam schedule.
  StepStats pretrain_step(CaseBatch batch);
  /// One self-critical policy-gradient step with learning rate `lr`.
  StepStats rl_step(CaseBatch batch, double lr);

  EpochStats pretrain_epoch(int epoch);
  EpochStats rl_epoch(int epoch);

  /// Beam-search evaluation on the named split using only `views`.
  EvalResult evaluate(const std::string& split, dot::AvailableViews views);
  /// Inference-time generator input for one case.
  vision::ViewEmbedding inference_input(const corpus::StudyCase& c, dot::AvailableViews views,
                                        std::size_t* action = nullptr) const;
  /// Beam-decoded report tokens for one case.
  std::vector<std::string> generate(const corpus::StudyCase& c, dot::AvailableViews views,
                                    std::size_t* action = nullptr) const;

  std::vector<const corpus::StudyCase*> split_cases(const std::string& split) const;

 private:
  struct Embedded {
    vision::ViewEmbedding frontal;
    vision::ViewEmbedding lateral;
  };
  Embedded embed(const corpus::StudyCase& c) const;
  /// Training-time generator input; returns the chosen DoT action or -1.
  vision::ViewEmbedding training_input(const Embedded& e, int* action);
  double reward(std::span<const int> ids, const corpus::StudyCase& c) const;

  TrainConfig config_;
  const corpus::PreparedData& data_;
  Model model_;
  CaseInputs inputs_;
  nn::Adam pretrain_optimizer_;
  nn::Adam rl_optimizer_;
  Rng shuffle_rng_;
  Rng dot_rng_;
  Rng rl_rng_;
  long pretrain_steps_ = 0;
};

}  // namespace c2m::harness
