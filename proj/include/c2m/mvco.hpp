#pragma once

#include "c2m/autograd.hpp"
#include "c2m/generator.hpp"
#include "c2m/nn.hpp"

#include <span>
#include <string>
#include <string_view>

namespace c2m::mvco {

/// Where the contrastive projection reads its input from.
enum class Position { decoder, encoder };

Position parse_position(std::string_view s);
std::string_view to_string(Position p);

struct MvcoConfig {
  bool enabled = true;
  double tau_c = 0.1;
  double weight = 1.0;
  Position position = Position::decoder;
  /// Projection width; 0 means d_model.
  int d_proj = 0;
};

/// Shared semantic head: affine, ReLU, affine.
class SemanticHead {
 public:
  SemanticHead() = default;
  SemanticHead(nn::ParameterStore& store, const std::string& name, int in_dim, int d_proj,
               Rng& rng);
  /// Rows of `input` are projected independently.
  ag::Tensor operator()(const ag::Tensor& input) const;
  int in_dim() const { return static_cast<int>(first.in_features()); }

  nn::Linear first;
  nn::Linear second;
};

/// Decoder-side input: [c, h] of the last step (1 x 2 d_model).
ag::Tensor decoder_semantic_input(const generator::DecoderOutput& out);
/// Encoder-side input: region-mean of the encoder memory (1 x d_model).
ag::Tensor encoder_semantic_input(const ag::Tensor& memory);

/// m.n / (|m||n|). A zero-norm argument yields 0 and logs a warning.
double cosine_sim(std::span<const double> m, std::span<const double> n);

/// Symmetric NT-Xent over the 2N pool [frontal rows; lateral rows]. Row i of
/// `frontal` and row i of `lateral` are positives; every other projection in
/// the pool is a negative. Averaged over all 2N anchors. Throws for N < 2.
ag::Tensor mvco_loss(const ag::Tensor& frontal, const ag::Tensor& lateral, double tau_c);

}  // namespace c2m::mvco
