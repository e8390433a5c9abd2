#pragma once

#include "c2m/autograd.hpp"
#include "c2m/corpus.hpp"
#include "c2m/nn.hpp"
#include "c2m/vision.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace c2m::cmc {

enum class Variant { kl, js, mse, cl };
/// Gradient path of the consistency term: through soft decoding, or as an RL reward.
enum class Mode { soft, reward };
/// kl: KL(true || pred). reverse: KL(pred || true).
enum class KlOrder { target_first, pred_first };

Variant parse_variant(std::string_view s);
std::string_view to_string(Variant v);
Mode parse_mode(std::string_view s);
std::string_view to_string(Mode m);
KlOrder parse_kl_order(std::string_view s);
std::string_view to_string(KlOrder o);

struct CmcConfig {
  bool enabled = true;
  Variant variant = Variant::kl;
  Mode mode = Mode::soft;
  KlOrder kl_order = KlOrder::target_first;
  double weight = 1.0;
  double tau_m_init = 0.07;
  std::string backend = "synthetic";
  int d_sem = 512;
  std::uint64_t backend_seed = 4321;
};

/// Frozen image and text encoders into a shared semantic space. Nothing here
/// is trainable; implementations are immutable after construction.
class SemanticEncoders {
 public:
  virtual ~SemanticEncoders() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  /// 1 x d_sem. Throws std::invalid_argument on an unresolvable reference.
  virtual ag::Matrix encode_image(std::string_view image_ref, vision::View view) const = 0;
  /// Differentiable in `token_probs` (Q x D, row-stochastic). Returns 1 x d_sem.
  virtual ag::Tensor encode_text_soft(const ag::Tensor& token_probs) const = 0;
  /// Hard-token path; equals encode_text_soft on the one-hot matrix of `ids`.
  ag::Matrix encode_text(std::span<const int> ids) const;
  virtual int vocab_size() const = 0;
};

/// Synthetic semantic space with one axis per finding plus normal, background,
/// frontal and lateral axes, lifted to d_sem by a fixed random matrix. An image
/// embeds its finding indicator (or the normal axis), a background component
/// and a small view marker. A text embeds the mean of per-token rows: a finding
/// keyword maps to its finding axis, the normal keyword to the normal axis and
/// every other token to a small background vector.
class SyntheticSemanticEncoders final : public SemanticEncoders {
 public:
  SyntheticSemanticEncoders(const corpus::Vocabulary& vocab, int latent_dim, int d_sem,
                            std::uint64_t seed);
  std::string name() const override { return "synthetic"; }
  int dim() const override { return static_cast<int>(lift_.rows()); }
  ag::Matrix encode_image(std::string_view image_ref, vision::View view) const override;
  ag::Tensor encode_text_soft(const ag::Tensor& token_probs) const override;
  int vocab_size() const override { return static_cast<int>(token_table_.rows()); }

  static constexpr double kBackgroundScale = 0.1;
  static constexpr double kViewScale = 0.3;

 private:
  int latent_dim_;
  ag::Matrix lift_;         // d_sem x (latent_dim + 4)
  ag::Matrix token_table_;  // D x d_sem
};

/// cmc.backend in {synthetic}; `pretrained-clip` is reserved for a plug-in.
std::unique_ptr<SemanticEncoders> make_encoders(const CmcConfig& config,
                                                const corpus::Vocabulary& vocab, int latent_dim);

/// Learnable similarity temperature, clamped to [1e-3, 10] when used.
class Temperature {
 public:
  Temperature() = default;
  Temperature(nn::ParameterStore& store, const std::string& name, double init);
  ag::Tensor value() const;
  const ag::Tensor& raw() const { return raw_; }

  static constexpr double kMin = 1e-3;
  static constexpr double kMax = 10.0;

 private:
  ag::Tensor raw_;
};

/// cos(rows_i, cols_j) / tau_m: the pre-softmax similarity scores (N x N).
ag::Tensor similarity_logits(const ag::Tensor& rows, const ag::Tensor& cols, const ag::Tensor& tau_m);
/// Row softmax of similarity_logits; v2t passes images as rows, t2v texts.
ag::Tensor similarity_matrix(const ag::Tensor& rows, const ag::Tensor& cols, const ag::Tensor& tau_m);

/// Consistency between predicted and target similarity logits (both N x N);
/// the target never receives gradient. Mean over rows.
ag::Tensor consistency(const ag::Tensor& pred_logits, const ag::Tensor& true_logits,
                       Variant variant, KlOrder order = KlOrder::target_first);

/// Row-mean KL(target || pred) between row-stochastic matrices.
double kl_rows(const ag::Matrix& target, const ag::Matrix& pred);

/// One view's term: half the sum of the v2t and t2v consistencies.
ag::Tensor view_consistency(const ag::Tensor& images, const ag::Tensor& text_pred,
                            const ag::Tensor& text_true, const ag::Tensor& tau_m,
                            Variant variant, KlOrder order = KlOrder::target_first);

struct CmcBatch {
  ag::Matrix frontal_images;  // N x d_sem, empty when unavailable
  ag::Matrix lateral_images;  // N x d_sem, empty when unavailable
  ag::Tensor text_pred;       // N x d_sem
  ag::Matrix text_true;       // N x d_sem
};

/// Frontal term plus lateral term. A missing view contributes nothing (with a
/// warning); throws when neither view is present or N < 2.
ag::Tensor cmc_loss(const CmcBatch& batch, const ag::Tensor& tau_m, Variant variant,
                    KlOrder order = KlOrder::target_first);

}  // namespace c2m::cmc
