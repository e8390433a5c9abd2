#include "c2m/vision.hpp"

#include "c2m/corpus.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace c2m::vision {

std::string_view to_string(View v) {
  switch (v) {
    case View::frontal: return "frontal";
    case View::lateral: return "lateral";
    case View::fused: return "fused";
    case View::concatenated: return "concatenated";
  }
  return "unknown";
}

namespace {

std::size_t view_slot(View v) {
  if (v == View::frontal) return 0;
  if (v == View::lateral) return 1;
  throw std::invalid_argument("feature extraction needs a frontal or lateral view");
}

}  // namespace

SyntheticFeatureBackend::SyntheticFeatureBackend(const VisionConfig& config)
    : regions_(config.regions),
      d_feat_(config.d_feat),
      latent_dim_(config.latent_dim),
      noise_std_(config.noise_std) {
  if (regions_ < 1 || d_feat_ < 1 || latent_dim_ < 1) {
    throw std::invalid_argument("synthetic backend needs positive regions, d_feat, latent_dim");
  }
  for (const char* view : {"frontal", "lateral"}) {
    Rng rng = Rng::derive(config.backend_seed, std::string("synthetic-lift-") + view);
    std::vector<ag::Matrix> slots;
    for (int s = 0; s <= latent_dim_; ++s) {
      ag::Matrix m(regions_, d_feat_);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
      slots.push_back(std::move(m));
    }
    lifts_.push_back(std::move(slots));
  }
}

RegionFeatures SyntheticFeatureBackend::extract(std::string_view image_ref, View view) const {
  const auto ref = corpus::parse_synthetic_ref(image_ref);
  if (!ref) {
    throw std::invalid_argument("synthetic backend cannot resolve image reference '" +
                                std::string(image_ref) + "'");
  }
  const auto& lifts = lifts_[view_slot(view)];
  RegionFeatures out;
  out.view = view;
  out.grid = lifts[static_cast<std::size_t>(latent_dim_)];
  for (int f : ref->findings) {
    if (f >= latent_dim_) {
      throw std::invalid_argument("finding index " + std::to_string(f) +
                                  " exceeds the synthetic backend latent_dim");
    }
    out.grid += lifts[static_cast<std::size_t>(f)];
  }
  Rng noise = Rng::derive(ref->noise_seed, std::string("noise-") + std::string(to_string(view)));
  for (Eigen::Index i = 0; i < out.grid.size(); ++i) out.grid.data()[i] += noise_std_ * noise.normal();
  return out;
}

PrecomputedFeatureBackend::PrecomputedFeatureBackend(const VisionConfig& config)
    : regions_(config.regions), d_feat_(config.d_feat) {}

RegionFeatures PrecomputedFeatureBackend::extract(std::string_view image_ref, View view) const {
  view_slot(view);
  std::ifstream in{std::string(image_ref)};
  if (!in) {
    throw std::invalid_argument("pretrained-cnn backend cannot open '" + std::string(image_ref) +
                                "'");
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::vector<double> row;
    double x = 0.0;
    while (ss >> x) row.push_back(x);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (static_cast<int>(rows.size()) != regions_) {
    throw std::invalid_argument("feature file " + std::string(image_ref) + " has " +
                                std::to_string(rows.size()) + " regions, expected " +
                                std::to_string(regions_));
  }
  RegionFeatures out;
  out.view = view;
  out.grid.resize(regions_, d_feat_);
  for (int r = 0; r < regions_; ++r) {
    if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != d_feat_) {
      throw std::invalid_argument("feature file " + std::string(image_ref) +
                                  " has the wrong feature width");
    }
    for (int c = 0; c < d_feat_; ++c) out.grid(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  if (!out.grid.allFinite()) throw std::invalid_argument("non-finite features in " + std::string(image_ref));
  return out;
}

std::unique_ptr<FeatureBackend> make_backend(const VisionConfig& config) {
  if (config.backend == "synthetic") return std::make_unique<SyntheticFeatureBackend>(config);
  if (config.backend == "pretrained-cnn") return std::make_unique<PrecomputedFeatureBackend>(config);
  throw std::invalid_argument("unknown vision.backend '" + config.backend + "'");
}

ProjectionHead::ProjectionHead(nn::ParameterStore& store, const std::string& name, int d_feat,
                               int d_model, int depth, Rng& rng) {
  if (depth < 1) throw std::invalid_argument("projection head depth must be at least 1");
  int in = d_feat;
  for (int l = 0; l < depth; ++l) {
    layers_.emplace_back(store, name + ".layer" + std::to_string(l), in, d_model, rng);
    in = d_model;
  }
}

ag::Tensor ProjectionHead::operator()(const ag::Tensor& features) const {
  ag::Tensor x = features;
  for (const auto& layer : layers_) x = ag::elu(layer(x));
  return x;
}

ViewProjector::ViewProjector(nn::ParameterStore& store, const VisionConfig& config, Rng& rng)
    : frontal_(store, "vision.frontal_head", config.d_feat, config.d_model, config.head_depth, rng),
      lateral_(store, "vision.lateral_head", config.d_feat, config.d_model, config.head_depth, rng),
      d_feat_(config.d_feat) {}

const ProjectionHead& ViewProjector::head(View v) const {
  if (v == View::frontal) return frontal_;
  if (v == View::lateral) return lateral_;
  throw std::invalid_argument("only frontal and lateral views have projection heads");
}

ViewEmbedding ViewProjector::project(const RegionFeatures& f) const {
  if (f.grid.cols() != d_feat_) {
    throw std::invalid_argument("region features have width " + std::to_string(f.grid.cols()) +
                                ", projection expects " + std::to_string(d_feat_));
  }
  return {head(f.view)(ag::Tensor::constant(f.grid)), f.view};
}

ViewEmbedding fuse_views(const ViewEmbedding& frontal, const ViewEmbedding& lateral) {
  if (frontal.grid.rows() != lateral.grid.rows() || frontal.grid.cols() != lateral.grid.cols()) {
    throw std::invalid_argument("fuse_views needs identically shaped embeddings");
  }
  return {ag::add(frontal.grid, lateral.grid), View::fused};
}

ViewEmbedding concat_views(const ViewEmbedding& frontal, const ViewEmbedding& lateral) {
  if (frontal.grid.cols() != lateral.grid.cols()) {
    throw std::invalid_argument("concat_views needs equal widths");
  }
  const ag::Tensor parts[] = {frontal.grid, lateral.grid};
  return {ag::concat_rows(parts), View::concatenated};
}

}  // namespace c2m::vision
