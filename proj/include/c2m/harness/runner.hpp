#pragma once

#include "c2m/corpus.hpp"
#include "c2m/harness/config.hpp"
#include "c2m/harness/run_record.hpp"
#include "c2m/harness/trainer.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace c2m::harness {

struct RunOptions {
  /// Output directory; empty keeps everything in memory.
  std::filesystem::path out_dir;
  bool write_checkpoints = true;
  /// Export the four similarity matrices after every pretraining epoch.
  bool similarity_every_epoch = false;
  /// Splits evaluated (views=both) after pretraining.
  std::vector<std::string> eval_splits{"train", "val"};
  /// Called after every epoch (progress reporting).
  std::function<void(const EpochStats&)> on_epoch;
};

/// Builds the corpus for a config: the synthetic generator (seeded by
/// config.seed) split 70/10/20 with a train-only vocabulary.
corpus::PreparedData synthetic_data(const TrainConfig& config);

/// Pretrains for pretrain.epochs, saving checkpoint_latest.bin after every
/// epoch and checkpoint_pretrain.bin at the end, then evaluates.
RunRecord run_pretrain(Trainer& trainer, const RunOptions& options);

/// Self-critical fine-tuning for rl.epochs. Validation is evaluated before
/// and after (views=both) and stored in the record notes.
RunRecord run_rl(Trainer& trainer, const RunOptions& options);

/// Evaluates `views` on `split`; when both and frontal are requested, the
/// relative BLEU-4 gap is recorded in the notes.
RunRecord run_evaluate(Trainer& trainer, const std::string& split,
                       const std::vector<dot::AvailableViews>& views);

/// The 15 ablation variant names.
const std::vector<std::string>& variant_names();
/// Applies a variant's flag bundle to `base`; throws on an unknown name.
TrainConfig apply_variant(TrainConfig base, std::string_view variant);

/// pretrain -> evaluate on test with frontal, lateral and both views.
RunRecord run_ablation(const TrainConfig& config, const std::string& variant,
                       const corpus::PreparedData& data, const RunOptions& options);

/// Semantic projections of both views for up to `n_cases` sampled test cases
/// (decoder [c, h] when the model has no contrastive head).
struct SemanticExport {
  std::vector<std::string> case_ids;
  std::vector<std::string> views;
  ag::Matrix rows;
};
SemanticExport export_semantic_embeddings(const Trainer& trainer, int n_cases = 50);

/// The four v2t similarity matrices on up to `n_cases` test cases: frontal
/// vs predicted, frontal vs true, lateral vs predicted, lateral vs true.
struct SimilarityExport {
  std::vector<std::string> case_ids;
  double tau_m = 0.0;
  ag::Matrix frontal_pred, frontal_true, lateral_pred, lateral_true;
};
SimilarityExport export_similarity_matrices(const Trainer& trainer, int n_cases = 8);

void write_semantic_export(const std::filesystem::path& path, const SemanticExport& e);
void write_similarity_export(const std::filesystem::path& dir, const SimilarityExport& e);

}  // namespace c2m::harness
