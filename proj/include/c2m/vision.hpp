#pragma once

#include "c2m/autograd.hpp"
#include "c2m/nn.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace c2m::vision {

enum class View { frontal, lateral, fused, concatenated };

std::string_view to_string(View v);

/// Region-level backbone features for one view (R x d_feat).
struct RegionFeatures {
  ag::Matrix grid;
  View view = View::frontal;
};

/// Projected view embedding (R x d_model, or 2R x d_model when concatenated).
struct ViewEmbedding {
  ag::Tensor grid;
  View view = View::frontal;
};

struct VisionConfig {
  std::string backend = "synthetic";
  int d_feat = 2048;
  int d_model = 1024;
  int regions = 49;
  /// Projection-head depth (affine + ELU layers).
  int head_depth = 1;
  /// Synthetic backend: largest finding index + 1 it can render.
  int latent_dim = 16;
  double noise_std = 0.5;
  std::uint64_t backend_seed = 1234;
};

/// Sealed feature-extractor interface. Implementations are immutable after
/// construction, so `extract` may be called concurrently.
class FeatureBackend {
 public:
  virtual ~FeatureBackend() = default;
  virtual std::string name() const = 0;
  /// Throws std::invalid_argument when the reference cannot be resolved.
  virtual RegionFeatures extract(std::string_view image_ref, View view) const = 0;
  virtual int regions() const = 0;
  virtual int feature_dim() const = 0;
};

/// Deterministic stand-in for a CNN backbone: the finding indicator (plus a
/// constant bias slot) is lifted through fixed view-specific random maps and
/// perturbed by noise seeded from the reference itself.
class SyntheticFeatureBackend final : public FeatureBackend {
 public:
  explicit SyntheticFeatureBackend(const VisionConfig& config);
  std::string name() const override { return "synthetic"; }
  RegionFeatures extract(std::string_view image_ref, View view) const override;
  int regions() const override { return regions_; }
  int feature_dim() const override { return d_feat_; }

 private:
  int regions_;
  int d_feat_;
  int latent_dim_;
  double noise_std_;
  // [view][slot] -> R x d_feat; slot latent_dim_ is the bias slot.
  std::vector<std::vector<ag::Matrix>> lifts_;
};

/// Reads region features precomputed offline by a real backbone. The image
/// reference is a path to a whitespace-separated text matrix (one region per
/// line, d_feat columns).
class PrecomputedFeatureBackend final : public FeatureBackend {
 public:
  explicit PrecomputedFeatureBackend(const VisionConfig& config);
  std::string name() const override { return "pretrained-cnn"; }
  RegionFeatures extract(std::string_view image_ref, View view) const override;
  int regions() const override { return regions_; }
  int feature_dim() const override { return d_feat_; }

 private:
  int regions_;
  int d_feat_;
};

/// vision.backend in {synthetic, pretrained-cnn}.
std::unique_ptr<FeatureBackend> make_backend(const VisionConfig& config);

/// One view's projection head: `depth` affine layers, each followed by ELU.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(nn::ParameterStore& store, const std::string& name, int d_feat, int d_model,
                 int depth, Rng& rng);
  ag::Tensor operator()(const ag::Tensor& features) const;
  const std::vector<nn::Linear>& layers() const { return layers_; }

 private:
  std::vector<nn::Linear> layers_;
};

/// The two independent heads: frontal features only ever pass through the
/// frontal head, lateral through the lateral head.
class ViewProjector {
 public:
  ViewProjector() = default;
  ViewProjector(nn::ParameterStore& store, const VisionConfig& config, Rng& rng);

  ViewEmbedding project(const RegionFeatures& f) const;
  const ProjectionHead& head(View v) const;

 private:
  ProjectionHead frontal_;
  ProjectionHead lateral_;
  int d_feat_ = 0;
};

/// Element-wise sum; width is unchanged.
ViewEmbedding fuse_views(const ViewEmbedding& frontal, const ViewEmbedding& lateral);
/// Stacks the two region grids (2R x d_model), the concatenated baseline input.
ViewEmbedding concat_views(const ViewEmbedding& frontal, const ViewEmbedding& lateral);

}  // namespace c2m::vision
