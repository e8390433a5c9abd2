#include "c2m/dot.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace c2m::dot {

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

ag::Tensor one_hot(std::size_t index) {
  ag::Matrix m = ag::Matrix::Zero(1, kActions);
  m(0, static_cast<Eigen::Index>(index)) = 1.0;
  return ag::Tensor::constant(std::move(m));
}

std::span<const double> row_span(const ag::Tensor& t) {
  return {t.value().data(), static_cast<std::size_t>(t.value().size())};
}

}  // namespace

Strategy parse_strategy(std::string_view s) {
  if (s == "gumbel") return Strategy::gumbel;
  if (s == "random") return Strategy::random;
  if (s == "argmax") return Strategy::argmax;
  throw std::invalid_argument("unknown dot.strategy '" + std::string(s) + "'");
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::gumbel: return "gumbel";
    case Strategy::random: return "random";
    case Strategy::argmax: return "argmax";
  }
  return "unknown";
}

ActionSpace make_action_space(const vision::ViewEmbedding& frontal,
                              const vision::ViewEmbedding& lateral) {
  return {{frontal, lateral, vision::fuse_views(frontal, lateral)}};
}

ConfidenceHead::ConfidenceHead(nn::ParameterStore& store, const std::string& name, int d_model,
                               Rng& rng)
    : affine(store, name, 2 * d_model, static_cast<Eigen::Index>(kActions), rng) {}

ag::Tensor ConfidenceHead::operator()(const vision::ViewEmbedding& frontal,
                                      const vision::ViewEmbedding& lateral) const {
  if (frontal.grid.cols() != lateral.grid.cols()) {
    throw std::invalid_argument("confidence head: view widths differ");
  }
  const ag::Tensor pooled[] = {ag::mean_rows(frontal.grid), ag::mean_rows(lateral.grid)};
  return ag::softmax_rows(affine(ag::concat_cols(pooled)));
}

ag::Tensor gumbel_softmax(const ag::Tensor& probs, std::span<const double> noise, double tau_s) {
  if (!(tau_s > 0.0)) throw std::invalid_argument("gumbel_softmax: tau_s must be positive");
  if (static_cast<Eigen::Index>(noise.size()) != probs.cols() || probs.rows() != 1) {
    throw std::invalid_argument("gumbel_softmax: noise must match a 1 x K probability row");
  }
  ag::Matrix g(1, probs.cols());
  for (Eigen::Index i = 0; i < g.cols(); ++i) g(0, i) = noise[static_cast<std::size_t>(i)];
  const ag::Tensor perturbed = ag::add(ag::log_clamped(probs, 1e-20), ag::Tensor::constant(g));
  return ag::softmax_rows(ag::scale(perturbed, 1.0 / tau_s));
}

ag::Tensor gumbel_sample(const ag::Tensor& probs, double tau_s, Rng& rng) {
  std::vector<double> g(static_cast<std::size_t>(probs.cols()));
  for (double& x : g) x = rng.gumbel();
  return gumbel_softmax(probs, g, tau_s);
}

ActionSample sample_strategy(const ag::Tensor& probs, Strategy strategy, double tau_s, Rng& rng) {
  if (probs.rows() != 1 || probs.cols() != static_cast<Eigen::Index>(kActions)) {
    throw std::invalid_argument("sample_strategy expects a 1 x 3 probability row");
  }
  ActionSample s;
  s.probs = probs;
  s.strategy = strategy;
  switch (strategy) {
    case Strategy::gumbel:
      s.sample = gumbel_sample(probs, tau_s, rng);
      s.chosen = argmax(row_span(s.sample));
      break;
    case Strategy::random:
      s.chosen = rng.index(kActions);
      s.sample = one_hot(s.chosen);
      break;
    case Strategy::argmax:
      s.chosen = argmax(row_span(probs));
      s.sample = one_hot(s.chosen);
      break;
  }
  return s;
}

vision::ViewEmbedding select_input(const ActionSpace& actions, const ActionSample& sample) {
  if (sample.chosen >= kActions) throw std::out_of_range("select_input: action index");
  const ag::Tensor options[] = {actions.a[0].grid, actions.a[1].grid, actions.a[2].grid};
  const ag::Tensor& weights = sample.strategy == Strategy::argmax ? sample.probs : sample.sample;
  return {ag::select_straight_through(options, weights, sample.chosen),
          actions.a[sample.chosen].view};
}

AvailableViews parse_views(std::string_view s) {
  if (s == "frontal") return AvailableViews::frontal;
  if (s == "lateral") return AvailableViews::lateral;
  if (s == "both") return AvailableViews::both;
  throw std::invalid_argument("unknown --views value '" + std::string(s) + "'");
}

std::string_view to_string(AvailableViews v) {
  switch (v) {
    case AvailableViews::frontal: return "frontal";
    case AvailableViews::lateral: return "lateral";
    case AvailableViews::both: return "both";
  }
  return "unknown";
}

std::size_t route_inference(AvailableViews views, std::span<const double> probs) {
  if (views == AvailableViews::frontal) return kFrontal;
  if (views == AvailableViews::lateral) return kLateral;
  if (probs.size() != kActions) throw std::invalid_argument("route_inference: need 3 confidences");
  return argmax(probs);
}

}  // namespace c2m::dot
