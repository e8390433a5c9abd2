#include "c2m/generator.hpp"

#include "c2m/corpus.hpp"

#include <cmath>
#include <stdexcept>

namespace c2m::generator {

namespace {

constexpr int kBos = corpus::Vocabulary::kBos;
constexpr int kEos = corpus::Vocabulary::kEos;

ag::Matrix positional_encoding(int first, int count, int d) {
  ag::Matrix pe(count, d);
  for (int p = 0; p < count; ++p) {
    for (int i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d);
      const double angle = static_cast<double>(first + p) * rate;
      pe(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

void append_rows(ag::Matrix& m, const ag::Matrix& rows) {
  const Eigen::Index old = m.rows();
  m.conservativeResize(old + rows.rows(), rows.cols());
  m.bottomRows(rows.rows()) = rows;
}

}  // namespace

TargetReport TargetReport::from_content(const std::vector<int>& content) {
  if (content.empty()) throw std::invalid_argument("target report must not be empty");
  TargetReport t;
  t.ids.reserve(content.size() + 1);
  t.ids.push_back(kBos);
  t.ids.insert(t.ids.end(), content.begin(), content.end());
  return t;
}

ReportGenerator::ReportGenerator(nn::ParameterStore& store, const GeneratorConfig& config, Rng& rng)
    : config_(config) {
  if (config_.vocab_size <= corpus::Vocabulary::kReservedCount) {
    throw std::invalid_argument("generator vocab_size must exceed the reserved ids");
  }
  if (config_.d_ff <= 0) config_.d_ff = 2 * config_.d_model;
  const int d = config_.d_model;

  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "generator.encoder" + std::to_string(l);
    EncoderLayer layer;
    layer.norm1 = nn::LayerNorm(store, p + ".norm1", d);
    layer.attention = nn::MultiHeadAttention(store, p + ".attention", d, config_.heads, rng);
    layer.norm2 = nn::LayerNorm(store, p + ".norm2", d);
    layer.ffn = nn::FeedForward(store, p + ".ffn", d, config_.d_ff, rng);
    encoder_.push_back(std::move(layer));
  }
  encoder_norm_ = nn::LayerNorm(store, "generator.encoder_norm", d);

  ag::Matrix emb(config_.vocab_size, d);
  for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = rng.normal();
  token_embedding_ = store.add("generator.token_embedding", std::move(emb));

  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "generator.decoder" + std::to_string(l);
    DecoderLayer layer;
    layer.norm1 = nn::LayerNorm(store, p + ".norm1", d);
    layer.self_attention = nn::MultiHeadAttention(store, p + ".self_attention", d, config_.heads, rng);
    layer.norm2 = nn::LayerNorm(store, p + ".norm2", d);
    layer.cross_attention =
        nn::MultiHeadAttention(store, p + ".cross_attention", d, config_.heads, rng);
    layer.norm3 = nn::LayerNorm(store, p + ".norm3", d);
    layer.ffn = nn::FeedForward(store, p + ".ffn", d, config_.d_ff, rng);
    decoder_.push_back(std::move(layer));
  }
  decoder_norm_ = nn::LayerNorm(store, "generator.decoder_norm", d);
  output_ = nn::Linear(store, "generator.output", d, config_.vocab_size, rng, config_.zero_init_head);
}

ag::Tensor ReportGenerator::encode_memory(const ag::Tensor& regions) const {
  if (regions.cols() != config_.d_model) {
    throw std::invalid_argument("encode_memory: input width does not match d_model");
  }
  if (!regions.value().allFinite()) throw std::invalid_argument("encode_memory: non-finite input");
  ag::Tensor x = regions;
  for (const auto& layer : encoder_) {
    const ag::Tensor h = layer.norm1(x);
    x = ag::add(x, layer.attention(h, h));
    x = ag::add(x, layer.ffn(layer.norm2(x)));
  }
  return encoder_norm_(x);
}

ag::Tensor ReportGenerator::embed(std::span<const int> ids, int first_position) const {
  for (int id : ids) {
    if (id < 0 || id >= config_.vocab_size) throw std::out_of_range("token id outside the vocabulary");
  }
  return ag::add(ag::gather_rows(token_embedding_, ids),
                 ag::Tensor::constant(positional_encoding(first_position,
                                                          static_cast<int>(ids.size()),
                                                          config_.d_model)));
}

DecoderOutput ReportGenerator::decode_teacher_forced(const ag::Tensor& memory,
                                                     const TargetReport& target) const {
  if (target.ids.size() < 2) throw std::invalid_argument("decode: empty target report");
  const std::vector<int> inputs = target.inputs();
  const auto q = static_cast<Eigen::Index>(inputs.size());

  ag::Tensor x = embed(inputs, 0);
  ag::Tensor context;
  for (const auto& layer : decoder_) {
    const ag::Tensor h = layer.norm1(x);
    x = ag::add(x, layer.self_attention(h, h, Eigen::Index{0}));
    context = layer.cross_attention(layer.norm2(x), memory);
    x = ag::add(x, context);
    x = ag::add(x, layer.ffn(layer.norm3(x)));
  }
  const ag::Tensor top = decoder_norm_(x);

  DecoderOutput out;
  out.logits = output_(top);
  out.probs = ag::softmax_rows(out.logits);
  out.hidden_final = ag::slice_rows(top, q - 1, 1);
  out.context_final = context.defined() ? ag::slice_rows(context, q - 1, 1)
                                        : ag::Tensor::constant(ag::Matrix::Zero(1, config_.d_model));
  return out;
}

DecodeState ReportGenerator::start(const ag::Tensor& memory) const {
  ag::NoGradGuard no_grad;
  auto mem = std::make_shared<DecodeState::Memory>();
  for (const auto& layer : decoder_) {
    mem->keys.push_back(layer.cross_attention.key(memory).value());
    mem->values.push_back(layer.cross_attention.value(memory).value());
  }
  DecodeState s;
  s.layers.resize(decoder_.size());
  for (auto& l : s.layers) {
    l.self_keys.resize(0, config_.d_model);
    l.self_values.resize(0, config_.d_model);
  }
  s.memory = std::move(mem);
  return advance(s, kBos);
}

DecodeState ReportGenerator::advance(const DecodeState& state, int token) const {
  ag::NoGradGuard no_grad;
  DecodeState s = state;
  const int ids[] = {token};
  ag::Tensor x = embed(ids, s.position);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& layer = decoder_[l];
    const ag::Tensor h = layer.norm1(x);
    append_rows(s.layers[l].self_keys, layer.self_attention.key(h).value());
    append_rows(s.layers[l].self_values, layer.self_attention.value(h).value());
    x = ag::add(x, layer.self_attention.attend(h, ag::Tensor::constant(s.layers[l].self_keys),
                                               ag::Tensor::constant(s.layers[l].self_values)));
    x = ag::add(x, layer.cross_attention.attend(layer.norm2(x),
                                                ag::Tensor::constant(s.memory->keys[l]),
                                                ag::Tensor::constant(s.memory->values[l])));
    x = ag::add(x, layer.ffn(layer.norm3(x)));
  }
  s.next_log_probs = next_log_probs(decoder_norm_(x));
  ++s.position;
  return s;
}

std::vector<double> ReportGenerator::next_log_probs(const ag::Tensor& top) const {
  const ag::Tensor lp = ag::log_softmax_rows(output_(top));
  return {lp.value().data(), lp.value().data() + lp.value().size()};
}

Hypothesis ReportGenerator::greedy(const ag::Tensor& memory, int max_len) const {
  return greedy_decode(GeneratorStepModel(*this, memory), max_len, kEos);
}

Hypothesis ReportGenerator::beam(const ag::Tensor& memory, int beam_size, int max_len) const {
  return beam_search(GeneratorStepModel(*this, memory), beam_size, max_len, kEos);
}

Hypothesis ReportGenerator::sample(const ag::Tensor& memory, int max_len, Rng& rng) const {
  Hypothesis h;
  DecodeState s = start(memory);
  for (int step = 0; step < max_len; ++step) {
    std::vector<double> p(s.next_log_probs.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(s.next_log_probs[i]);
    const int tok = static_cast<int>(rng.categorical(p));
    h.tokens.push_back(tok);
    h.log_prob += s.next_log_probs[static_cast<std::size_t>(tok)];
    if (tok == kEos) break;
    if (step + 1 < max_len) s = advance(s, tok);
  }
  return h;
}

ag::Tensor cross_entropy_loss(const TargetReport& target, const DecoderOutput& out) {
  const std::vector<int> t = target.targets();
  if (static_cast<Eigen::Index>(t.size()) != out.logits.rows()) {
    throw std::invalid_argument("cross_entropy_loss: target and output lengths differ");
  }
  return ag::cross_entropy(out.logits, t);
}

ag::Tensor sequence_log_prob(const TargetReport& target, const DecoderOutput& out) {
  return ag::scale(cross_entropy_loss(target, out), -static_cast<double>(target.length()));
}

}  // namespace c2m::generator
