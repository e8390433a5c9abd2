#include "c2m/harness/model.hpp"

#include <spdlog/spdlog.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace c2m::harness {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', '2', 'M', 'C', 'K', 'P', 'T', '1'};

int view_key(vision::View v) { return v == vision::View::frontal ? 0 : 1; }

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint is truncated");
  return v;
}

struct RawCheckpoint {
  std::uint64_t hash = 0;
  json header;
  std::streampos data_offset;
};

RawCheckpoint open_checkpoint(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint file");
  }
  RawCheckpoint raw;
  raw.hash = read_pod<std::uint64_t>(in);
  const auto length = read_pod<std::uint64_t>(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw std::runtime_error("checkpoint header is truncated");
  raw.header = json::parse(text);
  raw.data_offset = in.tellg();
  return raw;
}

}  // namespace

Model::Model(const TrainConfig& config, const corpus::Vocabulary& vocab)
    : tau_m_init_(config.cmc.tau_m_init) {
  vision::VisionConfig vc = config.vision;
  vc.d_model = config.model.d_model;
  Rng vision_rng = Rng::derive(config.seed, "init-vision");
  projector = vision::ViewProjector(store, vc, vision_rng);

  Rng generator_rng = Rng::derive(config.seed, "init-generator");
  generator = generator::ReportGenerator(store, generator_config(config, vocab.size()), generator_rng);

  const int d = config.model.d_model;
  if (config.mvco.enabled) {
    Rng rng = Rng::derive(config.seed, "init-mvco");
    const int in_dim = config.mvco.position == mvco::Position::decoder ? 2 * d : d;
    const int d_proj = config.mvco.d_proj > 0 ? config.mvco.d_proj : d;
    semantic.emplace(store, "mvco.semantic_head", in_dim, d_proj, rng);
  }
  if (config.dot.enabled) {
    Rng rng = Rng::derive(config.seed, "init-dot");
    confidence.emplace(store, "dot.confidence", d, rng);
  }
  if (config.cmc.enabled) tau_m.emplace(store, "cmc.tau_m", config.cmc.tau_m_init);
}

ag::Tensor Model::temperature() const {
  if (tau_m) return tau_m->value();
  return ag::Tensor::constant(ag::Matrix::Constant(1, 1, tau_m_init_));
}

CaseInputs::CaseInputs(const TrainConfig& config, const corpus::Vocabulary& vocab)
    : vocab_(vocab), max_len_(config.model.max_len) {
  vision::VisionConfig vc = config.vision;
  vc.d_model = config.model.d_model;
  backend_ = vision::make_backend(vc);
  encoders_ = cmc::make_encoders(config.cmc, vocab, config.vision.latent_dim);
}

const std::string& CaseInputs::ref(const corpus::StudyCase& c, vision::View view) const {
  const std::string& r = view == vision::View::frontal ? c.frontal_ref : c.lateral_ref;
  if (r.empty()) {
    throw std::invalid_argument("case " + c.case_id + " has no " +
                                std::string(vision::to_string(view)) + " view");
  }
  return r;
}

const ag::Matrix& CaseInputs::features(const corpus::StudyCase& c, vision::View view) const {
  const auto key = std::make_pair(c.case_id, view_key(view));
  auto it = features_.find(key);
  if (it == features_.end()) {
    it = features_.emplace(key, backend_->extract(ref(c, view), view).grid).first;
  }
  return it->second;
}

const ag::Matrix& CaseInputs::image_semantic(const corpus::StudyCase& c, vision::View view) const {
  const auto key = std::make_pair(c.case_id, view_key(view));
  auto it = semantics_.find(key);
  if (it == semantics_.end()) {
    it = semantics_.emplace(key, encoders_->encode_image(ref(c, view), view)).first;
  }
  return it->second;
}

const std::vector<int>& CaseInputs::target(const corpus::StudyCase& c) const {
  auto it = targets_.find(c.case_id);
  if (it == targets_.end()) {
    it = targets_.emplace(c.case_id, vocab_.encode_target(c.report, max_len_)).first;
  }
  return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const TrainConfig& config, const corpus::Vocabulary& vocab,
                     const std::string& phase, int epoch) {
  json header;
  header["config"] = to_json(config);
  header["vocab"] = vocab.tokens();
  header["phase"] = phase;
  header["epoch"] = epoch;
  json params = json::array();
  for (const auto& p : model.store.entries()) {
    params.push_back({{"name", p.name}, {"rows", p.tensor.rows()}, {"cols", p.tensor.cols()}});
  }
  header["parameters"] = params;
  const std::string text = header.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, structure_hash(config, vocab.tokens()));
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : model.store.entries()) {
      out.write(reinterpret_cast<const char*>(p.tensor.value().data()),
                static_cast<std::streamsize>(p.tensor.value().size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const RawCheckpoint raw = open_checkpoint(in, path);
  CheckpointHeader h;
  h.config = from_json(raw.header.at("config"));
  h.vocab_tokens = raw.header.at("vocab").get<std::vector<std::string>>();
  h.structure_hash = raw.hash;
  h.phase = raw.header.at("phase").get<std::string>();
  h.epoch = raw.header.at("epoch").get<int>();
  return h;
}

void load_checkpoint(const std::filesystem::path& path, Model& model, const TrainConfig& config,
                     const corpus::Vocabulary& vocab, bool force) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const RawCheckpoint raw = open_checkpoint(in, path);
  const std::uint64_t expected = structure_hash(config, vocab.tokens());
  if (raw.hash != expected) {
    if (!force) {
      throw std::runtime_error("checkpoint " + path.string() +
                               " was written for a different model configuration "
                               "(structure hash mismatch); pass --force to load anyway");
    }
    spdlog::warn("loading {} despite a structure hash mismatch", path.string());
  }
  const json& params = raw.header.at("parameters");
  auto& entries = model.store.entries();
  if (params.size() != entries.size()) {
    throw std::runtime_error("checkpoint parameter count differs from the model");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& meta = params[i];
    auto& t = entries[i].tensor;
    if (meta.at("name").get<std::string>() != entries[i].name ||
        meta.at("rows").get<Eigen::Index>() != t.rows() ||
        meta.at("cols").get<Eigen::Index>() != t.cols()) {
      throw std::runtime_error("checkpoint parameter '" + meta.at("name").get<std::string>() +
                               "' does not match the model");
    }
    in.read(reinterpret_cast<char*>(t.mutable_value().data()),
            static_cast<std::streamsize>(t.value().size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint data is truncated");
  }
}

}  // namespace c2m::harness
