#pragma once

#include "c2m/autograd.hpp"
#include "c2m/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace c2m::nn {

using ag::Matrix;
using ag::Tensor;

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

/// Ordered registry of trainable leaves. Registration order is the
/// serialization and optimizer order, so it must be deterministic.
class ParameterStore {
 public:
  Tensor add(std::string name, Matrix init);
  const std::vector<NamedParameter>& entries() const { return entries_; }
  std::vector<NamedParameter>& entries() { return entries_; }
  const Tensor* find(const std::string& name) const;
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<NamedParameter> entries_;
};

Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
         Rng& rng, bool zero_init = false);
  Tensor operator()(const Tensor& x) const { return ag::affine(x, weight, bias); }
  Eigen::Index in_features() const { return weight.rows(); }
  Eigen::Index out_features() const { return weight.cols(); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, Eigen::Index width);
  Tensor operator()(const Tensor& x) const { return ag::layer_norm(x, gamma, beta); }
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, Eigen::Index width,
                     int heads, Rng& rng);
  /// Projects `source` to keys/values; callers that cache keys/values use
  /// `attend` directly.
  Tensor operator()(const Tensor& x, const Tensor& source,
                    std::optional<Eigen::Index> causal_offset = std::nullopt) const;
  Tensor attend(const Tensor& x, const Tensor& keys, const Tensor& values,
                std::optional<Eigen::Index> causal_offset = std::nullopt) const;
};

struct FeedForward {
  Linear expand, contract;

  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, Eigen::Index width,
              Eigen::Index hidden, Rng& rng);
  Tensor operator()(const Tensor& x) const { return contract(ag::relu(expand(x))); }
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  /// Global L2 gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 1.0;
};

/// Adam over every parameter in a store. Moment buffers are allocated on the
/// first step and follow the store's registration order.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}
  /// Applies one update with learning rate `lr`; returns the pre-clip
  /// gradient norm. Parameters without a gradient are left untouched.
  double step(ParameterStore& store, double lr);
  long steps() const { return steps_; }

 private:
  AdamOptions options_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  long steps_ = 0;
};

}  // namespace c2m::nn
