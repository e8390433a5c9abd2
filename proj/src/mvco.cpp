#include "c2m/mvco.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace c2m::mvco {

Position parse_position(std::string_view s) {
  if (s == "decoder") return Position::decoder;
  if (s == "encoder") return Position::encoder;
  throw std::invalid_argument("unknown mvco.position '" + std::string(s) + "'");
}

std::string_view to_string(Position p) {
  return p == Position::decoder ? "decoder" : "encoder";
}

SemanticHead::SemanticHead(nn::ParameterStore& store, const std::string& name, int in_dim,
                           int d_proj, Rng& rng)
    : first(store, name + ".first", in_dim, d_proj, rng),
      second(store, name + ".second", d_proj, d_proj, rng) {}

ag::Tensor SemanticHead::operator()(const ag::Tensor& input) const {
  if (input.cols() != first.in_features()) {
    throw std::invalid_argument("semantic head: input width " + std::to_string(input.cols()) +
                                ", expected " + std::to_string(first.in_features()));
  }
  return second(ag::relu(first(input)));
}

ag::Tensor decoder_semantic_input(const generator::DecoderOutput& out) {
  const ag::Tensor parts[] = {out.context_final, out.hidden_final};
  return ag::concat_cols(parts);
}

ag::Tensor encoder_semantic_input(const ag::Tensor& memory) { return ag::mean_rows(memory); }

double cosine_sim(std::span<const double> m, std::span<const double> n) {
  if (m.size() != n.size()) throw std::invalid_argument("cosine_sim: length mismatch");
  double dot = 0.0, mm = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    dot += m[i] * n[i];
    mm += m[i] * m[i];
    nn += n[i] * n[i];
  }
  if (mm == 0.0 || nn == 0.0) {
    spdlog::warn("cosine_sim: zero-norm vector, similarity taken as 0");
    return 0.0;
  }
  return dot / (std::sqrt(mm) * std::sqrt(nn));
}

ag::Tensor mvco_loss(const ag::Tensor& frontal, const ag::Tensor& lateral, double tau_c) {
  if (frontal.rows() != lateral.rows() || frontal.cols() != lateral.cols()) {
    throw std::invalid_argument("mvco_loss: frontal and lateral projections differ in shape");
  }
  const Eigen::Index n = frontal.rows();
  if (n < 2) throw std::invalid_argument("mvco_loss needs at least 2 cases for negatives");
  if (!(tau_c > 0.0)) throw std::invalid_argument("mvco_loss: tau_c must be positive");

  const ag::Tensor parts[] = {frontal, lateral};
  std::vector<Eigen::Index> zero_rows;
  const ag::Tensor z = ag::l2_normalize_rows(ag::concat_rows(parts), 1e-12, &zero_rows);
  if (!zero_rows.empty()) {
    spdlog::warn("mvco_loss: {} zero-norm projection(s), their similarities taken as 0",
                 zero_rows.size());
  }
  const ag::Tensor sims = ag::scale(ag::matmul_nt(z, z), 1.0 / tau_c);
  ag::Matrix mask = ag::Matrix::Zero(2 * n, 2 * n);
  mask.diagonal().setConstant(-1e30);
  const ag::Tensor logits = ag::add(sims, ag::Tensor::constant(std::move(mask)));

  std::vector<int> partner(static_cast<std::size_t>(2 * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    partner[static_cast<std::size_t>(i)] = static_cast<int>(i + n);
    partner[static_cast<std::size_t>(i + n)] = static_cast<int>(i);
  }
  return ag::cross_entropy(logits, partner);
}

}  // namespace c2m::mvco
