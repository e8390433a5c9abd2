#pragma once

#include "c2m/autograd.hpp"
#include "c2m/nn.hpp"
#include "c2m/rng.hpp"
#include "c2m/vision.hpp"

#include <array>
#include <span>
#include <string>
#include <string_view>

namespace c2m::dot {

inline constexpr std::size_t kActions = 3;
inline constexpr std::size_t kFrontal = 0;
inline constexpr std::size_t kLateral = 1;
inline constexpr std::size_t kFused = 2;

enum class Strategy { gumbel, random, argmax };

Strategy parse_strategy(std::string_view s);
std::string_view to_string(Strategy s);

struct DotConfig {
  bool enabled = true;
  double tau_s = 0.3;
  Strategy strategy = Strategy::gumbel;
};

/// Index 0 frontal, 1 lateral, 2 fused.
struct ActionSpace {
  std::array<vision::ViewEmbedding, kActions> a;
};

ActionSpace make_action_space(const vision::ViewEmbedding& frontal,
                              const vision::ViewEmbedding& lateral);

/// Softmax over an affine map of the region-mean-pooled frontal and lateral
/// embeddings, concatenated (1 x 2 d_model -> 1 x 3).
class ConfidenceHead {
 public:
  ConfidenceHead() = default;
  ConfidenceHead(nn::ParameterStore& store, const std::string& name, int d_model, Rng& rng);
  ag::Tensor operator()(const vision::ViewEmbedding& frontal,
                        const vision::ViewEmbedding& lateral) const;

  nn::Linear affine;
};

/// softmax((log max(P, 1e-20) + g) / tau_s) for the supplied Gumbel noise.
ag::Tensor gumbel_softmax(const ag::Tensor& probs, std::span<const double> noise, double tau_s);
/// Draws standard Gumbel noise from `rng` and applies gumbel_softmax.
ag::Tensor gumbel_sample(const ag::Tensor& probs, double tau_s, Rng& rng);

struct ActionSample {
  ag::Tensor probs;   // P, 1 x 3
  ag::Tensor sample;  // V, 1 x 3
  std::size_t chosen = 0;
  Strategy strategy = Strategy::gumbel;
};

/// gumbel: V from gumbel_sample. random: uniform one-hot, independent of P.
/// argmax: one-hot at argmax P. chosen = argmax V (lowest index on ties).
/// For argmax the straight-through weights are P itself so the confidence
/// head still receives a gradient; random passes none.
ActionSample sample_strategy(const ag::Tensor& probs, Strategy strategy, double tau_s, Rng& rng);

/// Hard selection of action `sample.chosen` with straight-through gradients
/// into the chosen action and into the sample weights.
vision::ViewEmbedding select_input(const ActionSpace& actions, const ActionSample& sample);

enum class AvailableViews { frontal, lateral, both };

AvailableViews parse_views(std::string_view s);
std::string_view to_string(AvailableViews v);

/// Inference routing: a single available view is used unconditionally; with
/// both views the argmax of the confidence vector decides.
std::size_t route_inference(AvailableViews views, std::span<const double> probs);

}  // namespace c2m::dot
