#include "c2m/harness/runner.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace c2m::harness {

using nlohmann::json;

corpus::PreparedData synthetic_data(const TrainConfig& config) {
  corpus::SyntheticOptions so;
  so.n_cases = config.data.n_cases;
  so.n_findings = config.data.n_findings;
  so.finding_probability = config.data.finding_probability;
  so.seed = config.seed;
  corpus::PrepareOptions po;
  po.seed = config.seed;
  po.min_count = config.data.min_count;
  return corpus::prepare(corpus::generate_synthetic_corpus(so), po);
}

namespace {

std::string epoch_dir(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03d", epoch);
  return buf;
}

void report(const RunOptions& options, const EpochStats& e) {
  if (options.on_epoch) options.on_epoch(e);
}

}  // namespace

RunRecord run_pretrain(Trainer& trainer, const RunOptions& options) {
  RunRecord r;
  r.command = "train";
  r.config = trainer.config();
  const bool persist = !options.out_dir.empty();
  if (persist) std::filesystem::create_directories(options.out_dir);
  const auto& vocab = trainer.data().vocab;

  for (int epoch = 1; epoch <= trainer.config().pretrain.epochs; ++epoch) {
    r.epochs.push_back(trainer.pretrain_epoch(epoch));
    report(options, r.epochs.back());
    if (persist && options.write_checkpoints) {
      save_checkpoint(options.out_dir / "checkpoint_latest.bin", trainer.model(), r.config, vocab,
                      "pretrain", epoch);
    }
    if (persist && options.similarity_every_epoch) {
      write_similarity_export(options.out_dir / "similarity" / epoch_dir(epoch),
                              export_similarity_matrices(trainer));
    }
  }
  if (persist && options.write_checkpoints) {
    save_checkpoint(options.out_dir / "checkpoint_pretrain.bin", trainer.model(), r.config, vocab,
                    "pretrain", trainer.config().pretrain.epochs);
    r.checkpoints = {"checkpoint_latest.bin", "checkpoint_pretrain.bin"};
  }
  for (const auto& split : options.eval_splits) {
    r.evaluations.push_back(trainer.evaluate(split, dot::AvailableViews::both));
  }
  r.notes["pretrain_steps"] = trainer.pretrain_steps();
  if (persist) write_run_record(options.out_dir, r);
  return r;
}

RunRecord run_rl(Trainer& trainer, const RunOptions& options) {
  RunRecord r;
  r.command = "rl-finetune";
  r.config = trainer.config();
  const bool persist = !options.out_dir.empty();
  if (persist) std::filesystem::create_directories(options.out_dir);

  EvalResult before = trainer.evaluate("val", dot::AvailableViews::both);
  before.split = "val-before-rl";
  r.evaluations.push_back(before);
  for (int epoch = 0; epoch < trainer.config().rl.epochs; ++epoch) {
    r.epochs.push_back(trainer.rl_epoch(epoch));
    report(options, r.epochs.back());
    if (persist && options.write_checkpoints) {
      save_checkpoint(options.out_dir / "checkpoint_latest.bin", trainer.model(), r.config,
                      trainer.data().vocab, "rl", epoch + 1);
    }
  }
  const EvalResult after = trainer.evaluate("val", dot::AvailableViews::both);
  r.evaluations.push_back(after);
  r.notes["val_reward_before"] = before.bundle.mixed_reward;
  r.notes["val_reward_after"] = after.bundle.mixed_reward;
  if (persist && options.write_checkpoints) {
    save_checkpoint(options.out_dir / "checkpoint_rl.bin", trainer.model(), r.config,
                    trainer.data().vocab, "rl", trainer.config().rl.epochs);
    r.checkpoints = {"checkpoint_latest.bin", "checkpoint_rl.bin"};
  }
  if (persist) write_run_record(options.out_dir, r);
  return r;
}

RunRecord run_evaluate(Trainer& trainer, const std::string& split,
                       const std::vector<dot::AvailableViews>& views) {
  RunRecord r;
  r.command = "evaluate";
  r.config = trainer.config();
  for (auto v : views) r.evaluations.push_back(trainer.evaluate(split, v));
  const EvalResult* both = r.find_eval(split, dot::AvailableViews::both);
  for (auto v : {dot::AvailableViews::frontal, dot::AvailableViews::lateral}) {
    const EvalResult* single = r.find_eval(split, v);
    if (both && single) {
      const double gap = relative_gap(*both, *single);
      r.notes["bleu4_relative_gap_" + std::string(dot::to_string(v))] = gap;
      spdlog::info("{}: BLEU-4 both {:.4f}, {} {:.4f}, relative gap {:.4f}", split,
                   both->bundle.bleu4, dot::to_string(v), single->bundle.bleu4, gap);
    }
  }
  return r;
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {
      "base-cat",   "mvco-cat",   "mvco-fus", "mvco-dot", "mvco-cmc",
      "c2m-dot",    "dot-random", "dot-argmax", "dot-gumbel", "cmc-cl",
      "cmc-mse",    "cmc-js",     "cmc-kl",   "mvco-encoder", "mvco-decoder"};
  return names;
}

TrainConfig apply_variant(TrainConfig c, std::string_view variant) {
  auto flags = [&c](bool mvco_on, bool dot_on, bool cmc_on, InputMode mode) {
    c.mvco.enabled = mvco_on;
    c.dot.enabled = dot_on;
    c.cmc.enabled = cmc_on;
    c.input_mode = mode;
    c.mvco.position = mvco::Position::decoder;
    c.dot.strategy = dot::Strategy::gumbel;
    c.cmc.variant = cmc::Variant::kl;
    c.cmc.mode = cmc::Mode::soft;
  };
  if (variant == "base-cat") {
    flags(false, false, false, InputMode::cat);
  } else if (variant == "mvco-cat") {
    flags(true, false, false, InputMode::cat);
  } else if (variant == "mvco-fus" || variant == "mvco-decoder") {
    flags(true, false, false, InputMode::fused);
  } else if (variant == "mvco-encoder") {
    flags(true, false, false, InputMode::fused);
    c.mvco.position = mvco::Position::encoder;
  } else if (variant == "mvco-dot") {
    flags(true, true, false, InputMode::fused);
  } else if (variant == "mvco-cmc") {
    flags(true, false, true, InputMode::fused);
  } else if (variant == "c2m-dot" || variant == "dot-gumbel" || variant == "cmc-kl") {
    flags(true, true, true, InputMode::fused);
  } else if (variant == "dot-random" || variant == "dot-argmax") {
    flags(true, true, true, InputMode::fused);
    c.dot.strategy = dot::parse_strategy(variant.substr(4));
  } else if (variant == "cmc-cl" || variant == "cmc-mse" || variant == "cmc-js") {
    flags(true, true, true, InputMode::fused);
    c.cmc.variant = cmc::parse_variant(variant.substr(4));
  } else {
    throw std::invalid_argument("unknown ablation variant '" + std::string(variant) + "'");
  }
  return c;
}

RunRecord run_ablation(const TrainConfig& config, const std::string& variant,
                       const corpus::PreparedData& data, const RunOptions& options) {
  const TrainConfig c = apply_variant(config, variant);
  Trainer trainer(c, data);
  RunOptions pre = options;
  pre.eval_splits.clear();
  pre.out_dir.clear();
  RunRecord r = run_pretrain(trainer, pre);
  r.command = "ablate";
  r.variant = variant;
  const RunRecord eval = run_evaluate(
      trainer, "test",
      {dot::AvailableViews::both, dot::AvailableViews::frontal, dot::AvailableViews::lateral});
  r.evaluations.insert(r.evaluations.end(), eval.evaluations.begin(), eval.evaluations.end());
  r.notes["domain_gap"] = eval.notes;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    if (options.write_checkpoints) {
      save_checkpoint(options.out_dir / "checkpoint_pretrain.bin", trainer.model(), c, data.vocab,
                      "pretrain", c.pretrain.epochs);
      r.checkpoints = {"checkpoint_pretrain.bin"};
    }
    write_run_record(options.out_dir, r);
  }
  return r;
}

namespace {

std::vector<const corpus::StudyCase*> sample_cases(const Trainer& trainer, int n,
                                                   std::string_view purpose) {
  std::vector<const corpus::StudyCase*> cases = trainer.split_cases("test");
  Rng rng = Rng::derive(trainer.config().seed, purpose);
  rng.shuffle(cases.begin(), cases.end());
  if (static_cast<int>(cases.size()) > n) cases.resize(static_cast<std::size_t>(n));
  return cases;
}

void write_matrix_csv(const std::filesystem::path& path, const ag::Matrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[40];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace

SemanticExport export_semantic_embeddings(const Trainer& trainer, int n_cases) {
  ag::NoGradGuard no_grad;
  const Model& model = trainer.model();
  const auto& gen = model.generator;
  const TrainConfig& config = trainer.config();
  SemanticExport e;
  std::vector<ag::Tensor> rows;
  for (const corpus::StudyCase* c : sample_cases(trainer, n_cases, "export-semantic")) {
    const auto target = generator::TargetReport::from_content(trainer.inputs().target(*c));
    for (vision::View v : {vision::View::frontal, vision::View::lateral}) {
      const vision::ViewEmbedding f = model.projector.project({trainer.inputs().features(*c, v), v});
      const ag::Tensor memory = gen.encode_memory(f.grid);
      ag::Tensor input = config.mvco.enabled && config.mvco.position == mvco::Position::encoder
                             ? mvco::encoder_semantic_input(memory)
                             : mvco::decoder_semantic_input(gen.decode_teacher_forced(memory, target));
      rows.push_back(model.semantic ? (*model.semantic)(input) : input);
      e.case_ids.push_back(c->case_id);
      e.views.emplace_back(vision::to_string(v));
    }
  }
  e.rows = rows.empty() ? ag::Matrix() : ag::concat_rows(rows).value();
  return e;
}

SimilarityExport export_similarity_matrices(const Trainer& trainer, int n_cases) {
  ag::NoGradGuard no_grad;
  const Model& model = trainer.model();
  const auto& enc = trainer.inputs().encoders();
  const auto cases = sample_cases(trainer, n_cases, "export-similarity");
  const auto n = static_cast<Eigen::Index>(cases.size());
  if (n < 2) throw std::invalid_argument("similarity export needs at least 2 test cases");

  SimilarityExport e;
  ag::Matrix img_f(n, enc.dim()), img_l(n, enc.dim()), pred(n, enc.dim()), truth(n, enc.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const corpus::StudyCase& c = *cases[static_cast<std::size_t>(i)];
    e.case_ids.push_back(c.case_id);
    const auto target = generator::TargetReport::from_content(trainer.inputs().target(c));
    const vision::ViewEmbedding input = trainer.inference_input(c, dot::AvailableViews::both);
    const auto decoded =
        model.generator.decode_teacher_forced(model.generator.encode_memory(input.grid), target);
    pred.row(i) = enc.encode_text_soft(decoded.probs).value();
    truth.row(i) = enc.encode_text(target.targets());
    img_f.row(i) = trainer.inputs().image_semantic(c, vision::View::frontal);
    img_l.row(i) = trainer.inputs().image_semantic(c, vision::View::lateral);
  }
  const ag::Tensor tau = model.temperature();
  e.tau_m = tau.item();
  auto sim = [&](const ag::Matrix& a, const ag::Matrix& b) {
    return cmc::similarity_matrix(ag::Tensor::constant(a), ag::Tensor::constant(b), tau).value();
  };
  e.frontal_pred = sim(img_f, pred);
  e.frontal_true = sim(img_f, truth);
  e.lateral_pred = sim(img_l, pred);
  e.lateral_true = sim(img_l, truth);
  return e;
}

void write_semantic_export(const std::filesystem::path& path, const SemanticExport& e) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "case_id,view";
  for (Eigen::Index j = 0; j < e.rows.cols(); ++j) out << ",x" << j;
  out << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < e.rows.rows(); ++i) {
    out << e.case_ids[static_cast<std::size_t>(i)] << ',' << e.views[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < e.rows.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", e.rows(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

void write_similarity_export(const std::filesystem::path& dir, const SimilarityExport& e) {
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir / "frontal_pred.csv", e.frontal_pred);
  write_matrix_csv(dir / "frontal_true.csv", e.frontal_true);
  write_matrix_csv(dir / "lateral_pred.csv", e.lateral_pred);
  write_matrix_csv(dir / "lateral_true.csv", e.lateral_true);
  std::ofstream meta(dir / "meta.json");
  meta << json{{"case_ids", e.case_ids}, {"tau_m", e.tau_m}, {"direction", "v2t"}}.dump(2) << '\n';
}

}  // namespace c2m::harness
