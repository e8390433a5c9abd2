#pragma once

#include "c2m/cmc.hpp"
#include "c2m/corpus.hpp"
#include "c2m/dot.hpp"
#include "c2m/generator.hpp"
#include "c2m/harness/config.hpp"
#include "c2m/mvco.hpp"
#include "c2m/nn.hpp"
#include "c2m/vision.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace c2m::harness {

/// All trainable modules of one run. Each module draws its initial weights
/// from its own seed-derived stream, so enabling or disabling one module never
/// changes the initialization of the others.
class Model {
 public:
  Model(const TrainConfig& config, const corpus::Vocabulary& vocab);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  nn::ParameterStore store;
  vision::ViewProjector projector;
  generator::ReportGenerator generator;
  std::optional<mvco::SemanticHead> semantic;
  std::optional<dot::ConfidenceHead> confidence;
  std::optional<cmc::Temperature> tau_m;

  /// Current similarity temperature (the configured initial value when CMC is off).
  ag::Tensor temperature() const;

 private:
  double tau_m_init_;
};

/// Frozen, deterministic per-case inputs: backbone features, semantic image
/// embeddings and encoded targets, computed once and cached.
class CaseInputs {
 public:
  CaseInputs(const TrainConfig& config, const corpus::Vocabulary& vocab);

  const ag::Matrix& features(const corpus::StudyCase& c, vision::View view) const;
  const ag::Matrix& image_semantic(const corpus::StudyCase& c, vision::View view) const;
  /// EOS-terminated target ids (at most model.max_len long).
  const std::vector<int>& target(const corpus::StudyCase& c) const;
  const cmc::SemanticEncoders& encoders() const { return *encoders_; }
  const corpus::Vocabulary& vocab() const { return vocab_; }

 private:
  const std::string& ref(const corpus::StudyCase& c, vision::View view) const;

  const corpus::Vocabulary& vocab_;
  int max_len_;
  std::unique_ptr<vision::FeatureBackend> backend_;
  std::unique_ptr<cmc::SemanticEncoders> encoders_;
  mutable std::map<std::pair<std::string, int>, ag::Matrix> features_;
  mutable std::map<std::pair<std::string, int>, ag::Matrix> semantics_;
  mutable std::map<std::string, std::vector<int>> targets_;
};

struct CheckpointHeader {
  TrainConfig config;
  std::vector<std::string> vocab_tokens;
  std::uint64_t structure_hash = 0;
  std::string phase;
  int epoch = 0;
};

/// Single-file archive: magic, structure hash, JSON header (config, vocabulary,
/// parameter names and shapes), then the raw float64 parameter values.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const TrainConfig& config, const corpus::Vocabulary& vocab,
                     const std::string& phase, int epoch);
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);
/// Throws std::runtime_error when the stored structure hash differs from the
/// one implied by (config, vocab), unless `force` is set; parameter names and
/// shapes must match in every case.
void load_checkpoint(const std::filesystem::path& path, Model& model, const TrainConfig& config,
                     const corpus::Vocabulary& vocab, bool force = false);

}  // namespace c2m::harness
