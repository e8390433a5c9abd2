#pragma once

#include "c2m/autograd.hpp"
#include "c2m/beam_search.hpp"
#include "c2m/nn.hpp"

#include <memory>
#include <vector>

namespace c2m::generator {

struct GeneratorConfig {
  int vocab_size = 0;
  int d_model = 1024;
  int heads = 8;
  int encoder_layers = 4;
  int decoder_layers = 4;
  /// Feed-forward hidden width; 0 means 2 * d_model.
  int d_ff = 0;
  int max_len = 60;
  /// Zero output projection, so an untrained model predicts uniformly.
  bool zero_init_head = false;
};

/// A report framed as BOS, tokens..., EOS. Teacher forcing feeds all but the
/// last id and predicts all but the first.
struct TargetReport {
  std::vector<int> ids;

  /// `content` is the EOS-terminated id sequence from Vocabulary::encode_target.
  static TargetReport from_content(const std::vector<int>& content);
  std::vector<int> inputs() const { return {ids.begin(), ids.end() - 1}; }
  std::vector<int> targets() const { return {ids.begin() + 1, ids.end()}; }
  int length() const { return static_cast<int>(ids.size()) - 1; }
};

struct DecoderOutput {
  ag::Tensor logits;         // Q x D
  ag::Tensor probs;          // Q x D, row softmax of logits
  ag::Tensor context_final;  // 1 x d_model, last-step cross-attention context
  ag::Tensor hidden_final;   // 1 x d_model, last-step decoder hidden state
};

/// Incremental decoding state with cached per-layer keys and values.
struct DecodeState {
  struct Layer {
    ag::Matrix self_keys;
    ag::Matrix self_values;
  };
  struct Memory {
    std::vector<ag::Matrix> keys;
    std::vector<ag::Matrix> values;
  };
  std::vector<Layer> layers;
  std::shared_ptr<const Memory> memory;
  int position = 0;
  std::vector<double> next_log_probs;
};

/// Pre-LN Transformer encoder-decoder over region memories.
class ReportGenerator {
 public:
  ReportGenerator() = default;
  ReportGenerator(nn::ParameterStore& store, const GeneratorConfig& config, Rng& rng);

  const GeneratorConfig& config() const { return config_; }

  /// Shape-preserving self-attention stack over the region grid.
  ag::Tensor encode_memory(const ag::Tensor& regions) const;

  /// Causal decoding of the whole target at once.
  DecoderOutput decode_teacher_forced(const ag::Tensor& memory, const TargetReport& target) const;

  /// State after consuming BOS, ready to predict the first token.
  DecodeState start(const ag::Tensor& memory) const;
  DecodeState advance(const DecodeState& state, int token) const;

  Hypothesis greedy(const ag::Tensor& memory, int max_len) const;
  Hypothesis beam(const ag::Tensor& memory, int beam_size, int max_len) const;
  /// Multinomial sampling from the model distribution.
  Hypothesis sample(const ag::Tensor& memory, int max_len, Rng& rng) const;

 private:
  struct EncoderLayer {
    nn::LayerNorm norm1, norm2;
    nn::MultiHeadAttention attention;
    nn::FeedForward ffn;
  };
  struct DecoderLayer {
    nn::LayerNorm norm1, norm2, norm3;
    nn::MultiHeadAttention self_attention;
    nn::MultiHeadAttention cross_attention;
    nn::FeedForward ffn;
  };

  ag::Tensor embed(std::span<const int> ids, int first_position) const;
  /// Log-probabilities of the next token from the top-layer state row.
  std::vector<double> next_log_probs(const ag::Tensor& top) const;

  GeneratorConfig config_;
  std::vector<EncoderLayer> encoder_;
  nn::LayerNorm encoder_norm_;
  ag::Tensor token_embedding_;
  std::vector<DecoderLayer> decoder_;
  nn::LayerNorm decoder_norm_;
  nn::Linear output_;
};

/// Adapter that exposes one memory to the generic beam/greedy drivers.
class GeneratorStepModel {
 public:
  using State = DecodeState;
  GeneratorStepModel(const ReportGenerator& generator, const ag::Tensor& memory)
      : generator_(generator), memory_(memory) {}
  State initial() const { return generator_.start(memory_); }
  std::vector<double> log_probs(const State& s) const { return s.next_log_probs; }
  State advance(const State& s, int token) const { return generator_.advance(s, token); }

 private:
  const ReportGenerator& generator_;
  ag::Tensor memory_;
};

/// Mean over target positions of -log p(target). The unnormalized sum in the
/// classical form differs only by the factor Q.
ag::Tensor cross_entropy_loss(const TargetReport& target, const DecoderOutput& out);

/// Sum of log p(target) over positions (differentiable), used by policy gradient.
ag::Tensor sequence_log_prob(const TargetReport& target, const DecoderOutput& out);

}  // namespace c2m::generator
