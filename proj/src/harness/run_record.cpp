#include "c2m/harness/run_record.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace c2m::harness {

using nlohmann::json;

double relative_gap(const EvalResult& both, const EvalResult& single) {
  if (both.bundle.bleu4 == 0.0) return 0.0;
  return std::abs(both.bundle.bleu4 - single.bundle.bleu4) / both.bundle.bleu4;
}

const EvalResult* RunRecord::find_eval(const std::string& split, dot::AvailableViews views) const {
  for (const auto& e : evaluations) {
    if (e.split == split && e.views == views) return &e;
  }
  return nullptr;
}

json to_json(const metrics::MetricBundle& b) {
  return {{"bleu1", b.bleu1},   {"bleu2", b.bleu2},   {"bleu3", b.bleu3},
          {"bleu4", b.bleu4},   {"meteor", b.meteor}, {"rouge_l", b.rouge_l},
          {"mixed_reward", b.mixed_reward}};
}

json to_json(const EpochStats& e) {
  return {{"phase", e.phase},
          {"epoch", e.epoch},
          {"steps", e.steps},
          {"lr", e.lr},
          {"ce", e.ce},
          {"mvco", e.mvco},
          {"cmc", e.cmc},
          {"total", e.total},
          {"sample_reward", e.sample_reward},
          {"baseline_reward", e.baseline_reward},
          {"actions", {{"frontal", e.actions[0]}, {"lateral", e.actions[1]}, {"fused", e.actions[2]}}}};
}

json to_json(const EvalResult& e) {
  return {{"split", e.split},
          {"views", std::string(dot::to_string(e.views))},
          {"metrics", to_json(e.bundle)},
          {"evaluated", e.evaluated},
          {"skipped", e.skipped},
          {"actions", {{"frontal", e.actions[0]}, {"lateral", e.actions[1]}, {"fused", e.actions[2]}}}};
}

json to_json(const RunRecord& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) epochs.push_back(to_json(e));
  json evals = json::array();
  for (const auto& e : r.evaluations) evals.push_back(to_json(e));
  return {{"command", r.command},         {"variant", r.variant},
          {"config", to_json(r.config)},  {"epochs", epochs},
          {"evaluations", evals},         {"checkpoints", r.checkpoints},
          {"notes", r.notes}};
}

std::string epochs_csv(const RunRecord& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "phase,epoch,steps,lr,ce,mvco,cmc,total,sample_reward,baseline_reward,"
         "actions_frontal,actions_lateral,actions_fused\n";
  for (const auto& e : r.epochs) {
    out << e.phase << ',' << e.epoch << ',' << e.steps << ',' << e.lr << ',' << e.ce << ','
        << e.mvco << ',' << e.cmc << ',' << e.total << ',' << e.sample_reward << ','
        << e.baseline_reward << ',' << e.actions[0] << ',' << e.actions[1] << ',' << e.actions[2]
        << '\n';
  }
  return out.str();
}

void write_run_record(const std::filesystem::path& dir, const RunRecord& r) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "run_record.json");
    if (!out) throw std::runtime_error("cannot write run record in " + dir.string());
    out << to_json(r).dump(2) << '\n';
  }
  std::ofstream csv(dir / "epochs.csv");
  if (!csv) throw std::runtime_error("cannot write epochs.csv in " + dir.string());
  csv << epochs_csv(r);
}

}  // namespace c2m::harness
