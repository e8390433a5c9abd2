#include "c2m/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <stdexcept>

namespace c2m::harness {

using nlohmann::json;

InputMode parse_input_mode(std::string_view s) {
  if (s == "cat") return InputMode::cat;
  if (s == "fused") return InputMode::fused;
  throw std::invalid_argument("unknown input.mode '" + std::string(s) + "'");
}

std::string_view to_string(InputMode m) { return m == InputMode::cat ? "cat" : "fused"; }

namespace {

struct Entry {
  std::string key;
  std::function<json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const json&)> set;
};

template <typename Field>
Entry field(std::string key, Field get_ref) {
  return {key,
          [get_ref](const TrainConfig& c) { return json(get_ref(const_cast<TrainConfig&>(c))); },
          [get_ref, key](TrainConfig& c, const json& v) {
            using T = std::remove_reference_t<decltype(get_ref(c))>;
            try {
              get_ref(c) = v.get<T>();
            } catch (const json::exception&) {
              throw std::invalid_argument("config key '" + key + "' has the wrong type");
            }
          }};
}

template <typename Enum>
Entry enum_field(std::string key, std::function<Enum&(TrainConfig&)> get_ref,
                 Enum (*parse)(std::string_view), std::string_view (*show)(Enum)) {
  return {key,
          [get_ref, show](const TrainConfig& c) {
            return json(std::string(show(get_ref(const_cast<TrainConfig&>(c)))));
          },
          [get_ref, parse, key](TrainConfig& c, const json& v) {
            if (!v.is_string()) throw std::invalid_argument("config key '" + key + "' needs a string");
            get_ref(c) = parse(v.get<std::string>());
          }};
}

metrics::BleuMode parse_bleu_mode(std::string_view s) {
  if (s == "corpus") return metrics::BleuMode::corpus;
  if (s == "sentence") return metrics::BleuMode::sentence;
  throw std::invalid_argument("unknown eval.bleu_mode '" + std::string(s) + "'");
}

std::string_view bleu_mode_name(metrics::BleuMode m) {
  return m == metrics::BleuMode::corpus ? "corpus" : "sentence";
}

#define C2M_FIELD(key, expr) field(key, [](TrainConfig& c) -> decltype(expr)& { return expr; })

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(C2M_FIELD("profile", c.profile));
    t.push_back(C2M_FIELD("seed", c.seed));
    t.push_back(C2M_FIELD("data.n_cases", c.data.n_cases));
    t.push_back(C2M_FIELD("data.n_findings", c.data.n_findings));
    t.push_back(C2M_FIELD("data.finding_probability", c.data.finding_probability));
    t.push_back(C2M_FIELD("data.min_count", c.data.min_count));
    t.push_back(C2M_FIELD("vision.backend", c.vision.backend));
    t.push_back(C2M_FIELD("vision.d_feat", c.vision.d_feat));
    t.push_back(C2M_FIELD("vision.regions", c.vision.regions));
    t.push_back(C2M_FIELD("vision.head_depth", c.vision.head_depth));
    t.push_back(C2M_FIELD("vision.latent_dim", c.vision.latent_dim));
    t.push_back(C2M_FIELD("vision.noise_std", c.vision.noise_std));
    t.push_back(C2M_FIELD("vision.backend_seed", c.vision.backend_seed));
    t.push_back(C2M_FIELD("model.d_model", c.model.d_model));
    t.push_back(C2M_FIELD("model.heads", c.model.heads));
    t.push_back(C2M_FIELD("model.encoder_layers", c.model.encoder_layers));
    t.push_back(C2M_FIELD("model.decoder_layers", c.model.decoder_layers));
    t.push_back(C2M_FIELD("model.d_ff", c.model.d_ff));
    t.push_back(C2M_FIELD("model.max_len", c.model.max_len));
    t.push_back(enum_field<InputMode>(
        "input.mode", [](TrainConfig& c) -> InputMode& { return c.input_mode; }, parse_input_mode,
        to_string));
    t.push_back(C2M_FIELD("pretrain.batch_size", c.pretrain.batch_size));
    t.push_back(C2M_FIELD("pretrain.epochs", c.pretrain.epochs));
    t.push_back(C2M_FIELD("pretrain.lr", c.pretrain.lr));
    t.push_back(C2M_FIELD("pretrain.warmup_steps", c.pretrain.warmup_steps));
    t.push_back(C2M_FIELD("pretrain.clip_norm", c.pretrain.clip_norm));
    t.push_back(C2M_FIELD("rl.batch_size", c.rl.batch_size));
    t.push_back(C2M_FIELD("rl.epochs", c.rl.epochs));
    t.push_back(C2M_FIELD("rl.lr", c.rl.lr));
    t.push_back(C2M_FIELD("rl.period", c.rl.period));
    t.push_back(C2M_FIELD("rl.keep_aux_losses", c.rl.keep_aux_losses));
    t.push_back(C2M_FIELD("mvco.enabled", c.mvco.enabled));
    t.push_back(C2M_FIELD("mvco.tau_c", c.mvco.tau_c));
    t.push_back(C2M_FIELD("mvco.weight", c.mvco.weight));
    t.push_back(enum_field<mvco::Position>(
        "mvco.position", [](TrainConfig& c) -> mvco::Position& { return c.mvco.position; },
        mvco::parse_position, mvco::to_string));
    t.push_back(C2M_FIELD("mvco.d_proj", c.mvco.d_proj));
    t.push_back(C2M_FIELD("dot.enabled", c.dot.enabled));
    t.push_back(C2M_FIELD("dot.tau_s", c.dot.tau_s));
    t.push_back(enum_field<dot::Strategy>(
        "dot.strategy", [](TrainConfig& c) -> dot::Strategy& { return c.dot.strategy; },
        dot::parse_strategy, dot::to_string));
    t.push_back(C2M_FIELD("cmc.enabled", c.cmc.enabled));
    t.push_back(enum_field<cmc::Variant>(
        "cmc.variant", [](TrainConfig& c) -> cmc::Variant& { return c.cmc.variant; },
        cmc::parse_variant, cmc::to_string));
    t.push_back(enum_field<cmc::Mode>(
        "cmc.mode", [](TrainConfig& c) -> cmc::Mode& { return c.cmc.mode; }, cmc::parse_mode,
        cmc::to_string));
    t.push_back(enum_field<cmc::KlOrder>(
        "cmc.kl_order", [](TrainConfig& c) -> cmc::KlOrder& { return c.cmc.kl_order; },
        cmc::parse_kl_order, cmc::to_string));
    t.push_back(C2M_FIELD("cmc.weight", c.cmc.weight));
    t.push_back(C2M_FIELD("cmc.tau_m_init", c.cmc.tau_m_init));
    t.push_back(C2M_FIELD("cmc.backend", c.cmc.backend));
    t.push_back(C2M_FIELD("cmc.d_sem", c.cmc.d_sem));
    t.push_back(C2M_FIELD("cmc.backend_seed", c.cmc.backend_seed));
    t.push_back(C2M_FIELD("eval.beam_size", c.eval.beam_size));
    t.push_back(enum_field<metrics::BleuMode>(
        "eval.bleu_mode", [](TrainConfig& c) -> metrics::BleuMode& { return c.eval.bleu_mode; },
        parse_bleu_mode, bleu_mode_name));
    t.push_back(C2M_FIELD("reward.weights", c.reward.w));
    return t;
  }();
  return table;
}

#undef C2M_FIELD

const Entry& find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key == key) return e;
  }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

TrainConfig profile_defaults(std::string_view profile) {
  TrainConfig c;
  if (profile == "paper") {
    c.profile = "paper";
    return c;
  }
  if (profile != "toy") throw std::invalid_argument("unknown profile '" + std::string(profile) + "'");
  c.profile = "toy";
  c.data.n_cases = 500;
  c.vision.d_feat = 256;
  c.vision.regions = 4;
  c.vision.latent_dim = 8;
  c.model.d_model = 64;
  c.model.heads = 4;
  c.model.encoder_layers = 1;
  c.model.decoder_layers = 2;
  c.model.d_ff = 128;
  c.model.max_len = 60;
  c.pretrain.batch_size = 8;
  c.pretrain.epochs = 60;
  c.pretrain.lr = 1e-3;
  c.pretrain.warmup_steps = 200;
  c.rl.batch_size = 8;
  c.rl.epochs = 3;
  c.rl.lr = 2e-5;
  c.rl.period = 15;
  c.cmc.d_sem = 32;
  return c;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(e.key);
  return keys;
}

void set_value(TrainConfig& config, std::string_view key, const json& value) {
  find_entry(key).set(config, value);
}

void set_from_string(TrainConfig& config, std::string_view key, std::string_view value) {
  const Entry& e = find_entry(key);
  const json current = e.get(config);
  json parsed;
  if (current.is_string()) {
    parsed = std::string(value);
  } else {
    parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) {
      throw std::invalid_argument("config key '" + std::string(key) + "': cannot parse '" +
                                  std::string(value) + "'");
    }
  }
  e.set(config, parsed);
}

json to_json(const TrainConfig& config) {
  json j = json::object();
  for (const auto& e : entries()) j[e.key] = e.get(config);
  return j;
}

TrainConfig from_json(const json& flat) {
  if (!flat.is_object()) throw std::invalid_argument("config document must be a JSON object");
  const std::string profile = flat.contains("profile") ? flat.at("profile").get<std::string>() : "paper";
  TrainConfig c = profile_defaults(profile);
  for (const auto& [key, value] : flat.items()) set_value(c, key, value);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("config " + path.string() + " is not valid JSON");
  return from_json(j);
}

void save_config(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config " + path.string());
  out << to_json(config).dump(2) << '\n';
}

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("invalid config: " + what);
  };
  require(c.pretrain.lr > 0.0 && c.rl.lr > 0.0, "learning rates must be positive");
  require(c.pretrain.batch_size >= 1 && c.rl.batch_size >= 1, "batch sizes must be >= 1");
  require(c.pretrain.epochs >= 0 && c.rl.epochs >= 0, "epoch counts must be >= 0");
  require(c.pretrain.warmup_steps >= 1, "pretrain.warmup_steps must be >= 1");
  require(c.rl.period >= 1, "rl.period must be >= 1");
  require(c.mvco.tau_c > 0.0, "mvco.tau_c must be positive");
  require(c.dot.tau_s > 0.0, "dot.tau_s must be positive");
  require(c.cmc.tau_m_init > 0.0, "cmc.tau_m_init must be positive");
  require(c.mvco.weight >= 0.0 && c.cmc.weight >= 0.0, "loss weights must be non-negative");
  require(c.model.d_model >= 1 && c.model.heads >= 1 && c.model.d_model % c.model.heads == 0,
          "model.d_model must be a positive multiple of model.heads");
  require(c.model.encoder_layers >= 0 && c.model.decoder_layers >= 1, "layer counts");
  require(c.model.max_len >= 2, "model.max_len must be >= 2");
  require(c.eval.beam_size >= 1, "eval.beam_size must be >= 1");
  require(c.data.n_findings >= 2 && c.data.n_findings <= c.vision.latent_dim,
          "data.n_findings must be in [2, vision.latent_dim]");
  require(c.cmc.enabled || c.cmc.variant == cmc::Variant::kl,
          "cmc.variant requires cmc.enabled");
  require(c.cmc.enabled || c.cmc.mode == cmc::Mode::soft, "cmc.mode requires cmc.enabled");
  require(c.dot.enabled || c.dot.strategy == dot::Strategy::gumbel,
          "dot.strategy requires dot.enabled");
  require(c.mvco.enabled || c.mvco.position == mvco::Position::decoder,
          "mvco.position requires mvco.enabled");
}

generator::GeneratorConfig generator_config(const TrainConfig& c, int vocab_size) {
  generator::GeneratorConfig g;
  g.vocab_size = vocab_size;
  g.d_model = c.model.d_model;
  g.heads = c.model.heads;
  g.encoder_layers = c.model.encoder_layers;
  g.decoder_layers = c.model.decoder_layers;
  g.d_ff = c.model.d_ff;
  g.max_len = c.model.max_len;
  return g;
}

std::uint64_t structure_hash(const TrainConfig& c, const std::vector<std::string>& vocab_tokens) {
  const json full = to_json(c);
  json s = json::object();
  for (const auto& [key, value] : full.items()) {
    const bool structural = key.starts_with("model.") || key.starts_with("vision.") ||
                            key == "mvco.enabled" || key == "mvco.position" ||
                            key == "mvco.d_proj" || key == "dot.enabled" || key == "cmc.enabled";
    if (structural) s[key] = value;
  }
  s["vocab"] = vocab_tokens;
  return fnv1a(s.dump());
}

double noam_lr(double base, int warmup_steps, long step) {
  const double s = static_cast<double>(std::max(1L, step));
  const double w = static_cast<double>(warmup_steps);
  return base * std::min(s / w, std::sqrt(w / s));
}

double cosine_lr(double base, int period, int epoch) {
  const double phase = static_cast<double>(epoch % period) / static_cast<double>(period);
  return 0.5 * base * (1.0 + std::cos(M_PI * phase));
}

}  // namespace c2m::harness
