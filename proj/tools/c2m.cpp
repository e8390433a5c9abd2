// Command-line entry point: prepare-data, train, rl-finetune, evaluate,
// ablate, score, export.

#include "c2m/corpus.hpp"
#include "c2m/harness/config.hpp"
#include "c2m/harness/runner.hpp"
#include "c2m/harness/trainer.hpp"
#include "c2m/metrics.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace c2m;
using nlohmann::json;

namespace {

struct ConfigArgs {
  std::string profile = "toy";
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> settings;

  void add(CLI::App* cmd) {
    cmd->add_option("--profile", profile, "Default profile: toy or paper")->capture_default_str();
    cmd->add_option("--config", config_file, "Flat JSON config with dotted keys");
    cmd->add_option("--seed", seed, "Run seed");
    cmd->add_option("--set", settings, "Override a config key: key=value")->take_all();
  }
};

void apply_settings(harness::TrainConfig& c, const std::vector<std::string>& settings) {
  for (const auto& s : settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    harness::set_from_string(c, s.substr(0, eq), s.substr(eq + 1));
  }
}

harness::TrainConfig resolve(const ConfigArgs& a) {
  harness::TrainConfig c = a.config_file.empty() ? harness::profile_defaults(a.profile)
                                                 : harness::load_config(a.config_file);
  if (a.seed) c.seed = *a.seed;
  apply_settings(c, a.settings);
  harness::validate(c);
  return c;
}

corpus::PreparedData load_data(const std::string& dir, const harness::TrainConfig& c) {
  if (!dir.empty()) return corpus::load_prepared(dir);
  spdlog::info("no --data given: generating the synthetic corpus ({} cases, seed {})",
               c.data.n_cases, c.seed);
  return harness::synthetic_data(c);
}

void log_epoch(const harness::EpochStats& e) {
  if (e.phase == "rl") {
    spdlog::info("rl epoch {}: lr {:.3g} sample reward {:.4f} baseline {:.4f}", e.epoch, e.lr,
                 e.sample_reward, e.baseline_reward);
  } else {
    spdlog::info("epoch {}: ce {:.4f} mvco {:.4f} cmc {:.4f} total {:.4f} lr {:.3g} actions {}/{}/{}",
                 e.epoch, e.ce, e.mvco, e.cmc, e.total, e.lr, e.actions[0], e.actions[1],
                 e.actions[2]);
  }
}

void log_evals(const harness::RunRecord& r) {
  for (const auto& e : r.evaluations) {
    spdlog::info("{} [{}]: BLEU-1 {:.4f} BLEU-4 {:.4f} METEOR {:.4f} ROUGE-L {:.4f} reward {:.4f}",
                 e.split, dot::to_string(e.views), e.bundle.bleu1, e.bundle.bleu4, e.bundle.meteor,
                 e.bundle.rouge_l, e.bundle.mixed_reward);
  }
}

struct CheckpointArgs {
  std::string checkpoint;
  std::string data;
  bool force = false;
  std::vector<std::string> settings;

  void add(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", data, "Prepared data directory (default: regenerate synthetic)");
    cmd->add_flag("--force", force, "Load despite a structure-hash mismatch");
    cmd->add_option("--set", settings, "Override a config key: key=value")->take_all();
  }
};

struct Loaded {
  harness::TrainConfig config;
  corpus::PreparedData data;
  std::unique_ptr<harness::Trainer> trainer;
};

Loaded load_trainer(const CheckpointArgs& a) {
  Loaded l;
  l.config = harness::read_checkpoint_header(a.checkpoint).config;
  apply_settings(l.config, a.settings);
  harness::validate(l.config);
  l.data = load_data(a.data, l.config);
  l.trainer = std::make_unique<harness::Trainer>(l.config, l.data);
  harness::load_checkpoint(a.checkpoint, l.trainer->model(), l.config, l.data.vocab, a.force);
  return l;
}

std::vector<metrics::Tokens> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<metrics::Tokens> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    metrics::Tokens t;
    for (std::string w; ss >> w;) t.push_back(w);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view report generation laboratory"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "Build manifest, split and vocabulary");
  std::string prep_out, prep_manifest;
  int prep_cases = 500, prep_findings = 6, prep_min_count = 5;
  std::uint64_t prep_seed = 0;
  prep->add_option("--out", prep_out, "Output directory")->required();
  prep->add_option("--manifest", prep_manifest, "Ingest an existing JSONL manifest instead");
  prep->add_option("--cases", prep_cases, "Synthetic case count")->capture_default_str();
  prep->add_option("--findings", prep_findings, "Synthetic finding count")->capture_default_str();
  prep->add_option("--min-count", prep_min_count, "Vocabulary threshold")->capture_default_str();
  prep->add_option("--seed", prep_seed, "Seed")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Pretrain");
  ConfigArgs train_cfg;
  train_cfg.add(train);
  std::string train_data, train_out;
  bool train_similarity = false;
  train->add_option("--data", train_data, "Prepared data directory (default: synthetic)");
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_flag("--export-similarity", train_similarity, "Export similarity matrices every epoch");

  // rl-finetune
  auto* rl = app.add_subcommand("rl-finetune", "Self-critical fine-tuning from a checkpoint");
  CheckpointArgs rl_args;
  rl_args.add(rl);
  std::string rl_out;
  rl->add_option("--out", rl_out, "Run directory")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Beam-search evaluation");
  CheckpointArgs ev_args;
  ev_args.add(ev);
  std::string ev_split = "test", ev_out;
  std::vector<std::string> ev_views{"both"};
  ev->add_option("--split", ev_split, "train, val or test")->capture_default_str();
  ev->add_option("--views", ev_views, "frontal, lateral and/or both")->delimiter(',');
  ev->add_option("--out", ev_out, "Run directory for the record");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run one ablation variant (or 'all')");
  ConfigArgs ab_cfg;
  ab_cfg.add(ab);
  std::string ab_variant, ab_data, ab_out;
  ab->add_option("variant", ab_variant, "Variant name or 'all'")->required();
  ab->add_option("--data", ab_data, "Prepared data directory (default: synthetic)");
  ab->add_option("--out", ab_out, "Output directory")->required();

  // score
  auto* sc = app.add_subcommand("score", "Score hypothesis lines against reference lines");
  std::string sc_hyp, sc_ref, sc_out, sc_mode = "corpus";
  sc->add_option("--hyp", sc_hyp, "Hypotheses, one whitespace-tokenized report per line")->required();
  sc->add_option("--ref", sc_ref, "References, aligned by line")->required();
  sc->add_option("--out", sc_out, "Output JSON (default: stdout)");
  sc->add_option("--bleu-mode", sc_mode, "corpus or sentence")->capture_default_str();

  // export
  auto* ex = app.add_subcommand("export", "Analysis exports");
  CheckpointArgs ex_args;
  ex_args.add(ex);
  std::string ex_kind, ex_out;
  int ex_cases = 0;
  ex->add_option("analysis", ex_kind, "semantic-embeddings or similarity-matrices")
      ->required()
      ->check(CLI::IsMember({"semantic-embeddings", "similarity-matrices"}));
  ex->add_option("--out", ex_out, "Output path")->required();
  ex->add_option("--cases", ex_cases, "Sampled case count (default 50 / 8)");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    harness::RunOptions opts;
    opts.on_epoch = log_epoch;

    if (*prep) {
      std::vector<corpus::StudyCase> cases;
      if (!prep_manifest.empty()) {
        cases = corpus::read_manifest(prep_manifest);
      } else {
        corpus::SyntheticOptions so;
        so.n_cases = prep_cases;
        so.n_findings = prep_findings;
        so.seed = prep_seed;
        cases = corpus::generate_synthetic_corpus(so);
      }
      corpus::PrepareOptions po;
      po.seed = prep_seed;
      po.min_count = prep_min_count;
      const corpus::PreparedData data = corpus::prepare(std::move(cases), po);
      corpus::save_prepared(prep_out, data);
      spdlog::info("prepared {} cases ({} / {} / {}), vocabulary {}", data.cases.size(),
                   data.split.train.size(), data.split.val.size(), data.split.test.size(),
                   data.vocab.size());
    } else if (*train) {
      const harness::TrainConfig c = resolve(train_cfg);
      const corpus::PreparedData data = load_data(train_data, c);
      harness::Trainer trainer(c, data);
      opts.out_dir = train_out;
      opts.similarity_every_epoch = train_similarity;
      fs::create_directories(train_out);
      harness::save_config(fs::path(train_out) / "config.json", c);
      log_evals(harness::run_pretrain(trainer, opts));
    } else if (*rl) {
      Loaded l = load_trainer(rl_args);
      opts.out_dir = rl_out;
      log_evals(harness::run_rl(*l.trainer, opts));
    } else if (*ev) {
      Loaded l = load_trainer(ev_args);
      std::vector<dot::AvailableViews> views;
      for (const auto& v : ev_views) views.push_back(dot::parse_views(v));
      const harness::RunRecord r = harness::run_evaluate(*l.trainer, ev_split, views);
      log_evals(r);
      if (!ev_out.empty()) harness::write_run_record(ev_out, r);
    } else if (*ab) {
      const harness::TrainConfig c = resolve(ab_cfg);
      const corpus::PreparedData data = load_data(ab_data, c);
      std::vector<std::string> variants =
          ab_variant == "all" ? harness::variant_names() : std::vector<std::string>{ab_variant};
      json summary = json::array();
      for (const auto& v : variants) {
        spdlog::info("ablation variant {}", v);
        opts.out_dir = fs::path(ab_out) / v;
        const harness::RunRecord r = harness::run_ablation(c, v, data, opts);
        log_evals(r);
        summary.push_back({{"variant", v}, {"domain_gap", r.notes["domain_gap"]}});
      }
      std::ofstream(fs::path(ab_out) / "ablation_summary.json") << summary.dump(2) << '\n';
    } else if (*sc) {
      const auto hyps = read_lines(sc_hyp);
      const auto refs = read_lines(sc_ref);
      if (hyps.size() != refs.size()) throw std::invalid_argument("--hyp and --ref line counts differ");
      const auto mode = sc_mode == "sentence" ? metrics::BleuMode::sentence : metrics::BleuMode::corpus;
      if (sc_mode != "sentence" && sc_mode != "corpus") throw std::invalid_argument("--bleu-mode");
      const json out = harness::to_json(metrics::score_corpus(hyps, refs, mode));
      if (sc_out.empty()) {
        std::cout << out.dump(2) << '\n';
      } else {
        std::ofstream(sc_out) << out.dump(2) << '\n';
      }
    } else if (*ex) {
      Loaded l = load_trainer(ex_args);
      if (ex_kind == "semantic-embeddings") {
        harness::write_semantic_export(
            ex_out, harness::export_semantic_embeddings(*l.trainer, ex_cases > 0 ? ex_cases : 50));
      } else {
        harness::write_similarity_export(
            ex_out, harness::export_similarity_matrices(*l.trainer, ex_cases > 0 ? ex_cases : 8));
      }
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
