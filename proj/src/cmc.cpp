#include "c2m/cmc.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <stdexcept>

namespace c2m::cmc {

Variant parse_variant(std::string_view s) {
  if (s == "kl") return Variant::kl;
  if (s == "js") return Variant::js;
  if (s == "mse") return Variant::mse;
  if (s == "cl") return Variant::cl;
  throw std::invalid_argument("unknown cmc.variant '" + std::string(s) + "'");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kl: return "kl";
    case Variant::js: return "js";
    case Variant::mse: return "mse";
    case Variant::cl: return "cl";
  }
  return "unknown";
}

Mode parse_mode(std::string_view s) {
  if (s == "soft") return Mode::soft;
  if (s == "reward") return Mode::reward;
  throw std::invalid_argument("unknown cmc.mode '" + std::string(s) + "'");
}

std::string_view to_string(Mode m) { return m == Mode::soft ? "soft" : "reward"; }

KlOrder parse_kl_order(std::string_view s) {
  if (s == "target-first") return KlOrder::target_first;
  if (s == "pred-first") return KlOrder::pred_first;
  throw std::invalid_argument("unknown cmc.kl_order '" + std::string(s) + "'");
}

std::string_view to_string(KlOrder o) {
  return o == KlOrder::target_first ? "target-first" : "pred-first";
}

ag::Matrix SemanticEncoders::encode_text(std::span<const int> ids) const {
  if (ids.empty()) throw std::invalid_argument("encode_text: empty report");
  ag::Matrix onehot = ag::Matrix::Zero(static_cast<Eigen::Index>(ids.size()), vocab_size());
  for (std::size_t q = 0; q < ids.size(); ++q) {
    if (ids[q] < 0 || ids[q] >= vocab_size()) throw std::out_of_range("encode_text: token id");
    onehot(static_cast<Eigen::Index>(q), ids[q]) = 1.0;
  }
  ag::NoGradGuard no_grad;
  return encode_text_soft(ag::Tensor::constant(std::move(onehot))).value();
}

SyntheticSemanticEncoders::SyntheticSemanticEncoders(const corpus::Vocabulary& vocab,
                                                     int latent_dim, int d_sem,
                                                     std::uint64_t seed)
    : latent_dim_(latent_dim) {
  if (latent_dim < 1 || d_sem < 1) {
    throw std::invalid_argument("synthetic semantic encoders need positive latent_dim and d_sem");
  }
  const int axes = latent_dim + 4;
  Rng rng = Rng::derive(seed, "semantic-lift");
  lift_.resize(d_sem, axes);
  const double s = 1.0 / std::sqrt(static_cast<double>(d_sem));
  for (Eigen::Index i = 0; i < lift_.size(); ++i) lift_.data()[i] = s * rng.normal();

  const Eigen::Index normal_axis = latent_dim;
  const Eigen::Index background_axis = latent_dim + 1;
  token_table_.resize(vocab.size(), d_sem);
  for (int id = 0; id < vocab.size(); ++id) {
    token_table_.row(id) = kBackgroundScale * lift_.col(background_axis).transpose();
  }
  for (int k = 0; k < latent_dim; ++k) {
    const std::string keyword = corpus::finding_template(k).name;
    if (vocab.contains(keyword)) token_table_.row(vocab.id(keyword)) = lift_.col(k).transpose();
  }
  if (vocab.contains(corpus::normal_keyword())) {
    token_table_.row(vocab.id(corpus::normal_keyword())) = lift_.col(normal_axis).transpose();
  }
}

ag::Matrix SyntheticSemanticEncoders::encode_image(std::string_view image_ref,
                                                   vision::View view) const {
  const auto ref = corpus::parse_synthetic_ref(image_ref);
  if (!ref) {
    throw std::invalid_argument("synthetic semantic encoder cannot resolve '" +
                                std::string(image_ref) + "'");
  }
  if (view != vision::View::frontal && view != vision::View::lateral) {
    throw std::invalid_argument("encode_image needs a frontal or lateral view");
  }
  Eigen::VectorXd axes = Eigen::VectorXd::Zero(lift_.cols());
  for (int f : ref->findings) {
    if (f >= latent_dim_) throw std::invalid_argument("finding index exceeds latent_dim");
    axes(f) = 1.0;
  }
  if (ref->findings.empty()) axes(latent_dim_) = 1.0;
  axes(latent_dim_ + 1) = 1.0;
  axes(latent_dim_ + (view == vision::View::frontal ? 2 : 3)) = kViewScale;
  return (lift_ * axes).transpose();
}

ag::Tensor SyntheticSemanticEncoders::encode_text_soft(const ag::Tensor& token_probs) const {
  if (token_probs.rows() < 1) throw std::invalid_argument("encode_text_soft: empty report");
  if (token_probs.cols() != token_table_.rows()) {
    throw std::invalid_argument("encode_text_soft: distribution width differs from vocabulary");
  }
  return ag::mean_rows(ag::matmul(token_probs, ag::Tensor::constant(token_table_)));
}

std::unique_ptr<SemanticEncoders> make_encoders(const CmcConfig& config,
                                                const corpus::Vocabulary& vocab, int latent_dim) {
  if (config.backend == "synthetic") {
    return std::make_unique<SyntheticSemanticEncoders>(vocab, latent_dim, config.d_sem,
                                                       config.backend_seed);
  }
  if (config.backend == "pretrained-clip") {
    throw std::invalid_argument("cmc.backend 'pretrained-clip' needs an external plug-in");
  }
  throw std::invalid_argument("unknown cmc.backend '" + config.backend + "'");
}

Temperature::Temperature(nn::ParameterStore& store, const std::string& name, double init) {
  if (!(init > 0.0)) throw std::invalid_argument("tau_m init must be positive");
  raw_ = store.add(name, ag::Matrix::Constant(1, 1, init));
}

ag::Tensor Temperature::value() const { return ag::clamp(raw_, kMin, kMax); }

ag::Tensor similarity_logits(const ag::Tensor& rows, const ag::Tensor& cols, const ag::Tensor& tau_m) {
  if (rows.rows() != cols.rows() || rows.cols() != cols.cols()) {
    throw std::invalid_argument("similarity matrix: embedding sets differ in shape");
  }
  if (rows.rows() < 2) throw std::invalid_argument("similarity matrix needs N >= 2");
  if (!(tau_m.item() > 0.0)) throw std::invalid_argument("similarity matrix: tau_m must be positive");
  const ag::Tensor cos = ag::matmul_nt(ag::l2_normalize_rows(rows), ag::l2_normalize_rows(cols));
  return ag::scale_by(cos, ag::reciprocal(tau_m));
}

ag::Tensor similarity_matrix(const ag::Tensor& rows, const ag::Tensor& cols, const ag::Tensor& tau_m) {
  return ag::softmax_rows(similarity_logits(rows, cols, tau_m));
}

namespace {

ag::Tensor row_mean_kl(const ag::Tensor& p, const ag::Tensor& log_p, const ag::Tensor& log_q) {
  return ag::scale(ag::sum(ag::mul(p, ag::sub(log_p, log_q))), 1.0 / static_cast<double>(p.rows()));
}

}  // namespace

ag::Tensor consistency(const ag::Tensor& pred_logits, const ag::Tensor& true_logits,
                       Variant variant, KlOrder order) {
  if (pred_logits.rows() != true_logits.rows() || pred_logits.cols() != true_logits.cols()) {
    throw std::invalid_argument("consistency: matrix shapes differ");
  }
  const ag::Tensor target = ag::detach(true_logits);
  switch (variant) {
    case Variant::kl: {
      const ag::Tensor log_p = ag::log_softmax_rows(pred_logits);
      const ag::Tensor log_t = ag::log_softmax_rows(target);
      if (order == KlOrder::target_first) return row_mean_kl(ag::exp(log_t), log_t, log_p);
      return row_mean_kl(ag::exp(log_p), log_p, log_t);
    }
    case Variant::js: {
      const ag::Tensor p = ag::softmax_rows(pred_logits);
      const ag::Tensor t = ag::softmax_rows(target);
      const ag::Tensor m = ag::scale(ag::add(p, t), 0.5);
      const ag::Tensor log_m = ag::log_clamped(m, 1e-300);
      const ag::Tensor kl_p = row_mean_kl(p, ag::log_softmax_rows(pred_logits), log_m);
      const ag::Tensor kl_t = row_mean_kl(t, ag::log_softmax_rows(target), log_m);
      return ag::scale(ag::add(kl_p, kl_t), 0.5);
    }
    case Variant::mse: {
      const ag::Tensor d = ag::sub(ag::softmax_rows(pred_logits), ag::softmax_rows(target));
      return ag::mean(ag::mul(d, d));
    }
    case Variant::cl: {
      std::vector<int> diagonal(static_cast<std::size_t>(pred_logits.rows()));
      for (std::size_t i = 0; i < diagonal.size(); ++i) diagonal[i] = static_cast<int>(i);
      return ag::cross_entropy(pred_logits, diagonal);
    }
  }
  throw std::invalid_argument("consistency: unknown variant");
}

double kl_rows(const ag::Matrix& target, const ag::Matrix& pred) {
  if (target.rows() != pred.rows() || target.cols() != pred.cols()) {
    throw std::invalid_argument("kl_rows: shape mismatch");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < target.rows(); ++i) {
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
      const double t = target(i, j);
      if (t > 0.0) total += t * (std::log(t) - std::log(pred(i, j)));
    }
  }
  return total / static_cast<double>(target.rows());
}

ag::Tensor view_consistency(const ag::Tensor& images, const ag::Tensor& text_pred,
                            const ag::Tensor& text_true, const ag::Tensor& tau_m,
                            Variant variant, KlOrder order) {
  const ag::Tensor v2t = consistency(similarity_logits(images, text_pred, tau_m),
                                     similarity_logits(images, text_true, tau_m), variant, order);
  const ag::Tensor t2v = consistency(similarity_logits(text_pred, images, tau_m),
                                     similarity_logits(text_true, images, tau_m), variant, order);
  return ag::scale(ag::add(v2t, t2v), 0.5);
}

ag::Tensor cmc_loss(const CmcBatch& batch, const ag::Tensor& tau_m, Variant variant,
                    KlOrder order) {
  const bool has_frontal = batch.frontal_images.size() > 0;
  const bool has_lateral = batch.lateral_images.size() > 0;
  if (!has_frontal && !has_lateral) throw std::invalid_argument("cmc_loss: no image view present");
  if (!has_frontal || !has_lateral) {
    spdlog::warn("cmc_loss: {} view missing, computing the available term only",
                 has_frontal ? "lateral" : "frontal");
  }
  const ag::Tensor text_true = ag::Tensor::constant(batch.text_true);
  ag::Tensor total;
  for (const ag::Matrix* images : {&batch.frontal_images, &batch.lateral_images}) {
    if (images->size() == 0) continue;
    const ag::Tensor term = view_consistency(ag::Tensor::constant(*images), batch.text_pred,
                                             text_true, tau_m, variant, order);
    total = total.defined() ? ag::add(total, term) : term;
  }
  return total;
}

}  // namespace c2m::cmc
