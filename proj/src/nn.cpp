#include "c2m/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace c2m::nn {

Tensor ParameterStore::add(std::string name, Matrix init) {
  for (const auto& e : entries_) {
    if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  Tensor t = Tensor::parameter(std::move(init));
  entries_.push_back({std::move(name), t});
  return t;
}

const Tensor* ParameterStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.tensor.value().size());
  return n;
}

Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-limit, limit);
  }
  return m;
}

Linear::Linear(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
               Rng& rng, bool zero_init) {
  weight = store.add(name + ".weight", zero_init ? Matrix(Matrix::Zero(in, out))
                                                 : xavier_uniform(in, out, rng));
  bias = store.add(name + ".bias", Matrix::Zero(1, out));
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, Eigen::Index width) {
  gamma = store.add(name + ".gamma", Matrix::Ones(1, width));
  beta = store.add(name + ".beta", Matrix::Zero(1, width));
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name,
                                       Eigen::Index width, int heads_, Rng& rng)
    : query(store, name + ".query", width, width, rng),
      key(store, name + ".key", width, width, rng),
      value(store, name + ".value", width, width, rng),
      output(store, name + ".output", width, width, rng),
      heads(heads_) {
  if (width % heads != 0) throw std::invalid_argument("attention width must divide into heads");
}

Tensor MultiHeadAttention::operator()(const Tensor& x, const Tensor& source,
                                      std::optional<Eigen::Index> causal_offset) const {
  return attend(x, key(source), value(source), causal_offset);
}

Tensor MultiHeadAttention::attend(const Tensor& x, const Tensor& keys, const Tensor& values,
                                  std::optional<Eigen::Index> causal_offset) const {
  return output(ag::attention(query(x), keys, values, heads, causal_offset));
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, Eigen::Index width,
                         Eigen::Index hidden, Rng& rng)
    : expand(store, name + ".expand", width, hidden, rng),
      contract(store, name + ".contract", hidden, width, rng) {}

double Adam::step(ParameterStore& store, double lr) {
  auto& entries = store.entries();
  if (first_.empty()) {
    for (const auto& e : entries) {
      first_.push_back(Matrix::Zero(e.tensor.rows(), e.tensor.cols()));
      second_.push_back(Matrix::Zero(e.tensor.rows(), e.tensor.cols()));
    }
  }
  if (first_.size() != entries.size()) {
    throw std::logic_error("parameter store changed after the optimizer started");
  }

  double sq = 0.0;
  for (const auto& e : entries) {
    if (e.tensor.has_grad()) sq += e.tensor.grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double clip =
      (options_.clip_norm > 0.0 && norm > options_.clip_norm) ? options_.clip_norm / norm : 1.0;

  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& p = entries[i].tensor;
    if (!p.has_grad()) continue;
    const Matrix g = p.grad() * clip;
    first_[i] = options_.beta1 * first_[i] + (1.0 - options_.beta1) * g;
    second_[i] = options_.beta2 * second_[i] + (1.0 - options_.beta2) * g.cwiseAbs2();
    p.mutable_value().array() -= lr * (first_[i].array() / bc1) /
                                 ((second_[i].array() / bc2).sqrt() + options_.eps);
  }
  return norm;
}

}  // namespace c2m::nn
