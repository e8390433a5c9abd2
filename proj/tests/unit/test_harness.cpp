#include "c2m/harness/config.hpp"
#include "c2m/harness/model.hpp"
#include "c2m/harness/run_record.hpp"
#include "c2m/harness/runner.hpp"
#include "c2m/harness/trainer.hpp"
#include "oracle/finite_difference.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace c2m;
using namespace c2m::harness;
using ag::Matrix;
using ag::Tensor;

namespace {

TrainConfig tiny_config() {
  TrainConfig c = profile_defaults("toy");
  c.data.n_cases = 40;
  c.vision.d_feat = 16;
  c.vision.regions = 2;
  c.model.d_model = 16;
  c.model.heads = 2;
  c.model.d_ff = 32;
  c.model.max_len = 30;
  c.pretrain.batch_size = 4;
  c.pretrain.epochs = 2;
  c.pretrain.warmup_steps = 10;
  c.rl.batch_size = 4;
  c.rl.epochs = 1;
  c.cmc.d_sem = 16;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("c2m_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<const corpus::StudyCase*> first_cases(const Trainer& t, std::size_t start, std::size_t n) {
  auto all = t.split_cases("train");
  return {all.begin() + static_cast<std::ptrdiff_t>(start), all.begin() + static_cast<std::ptrdiff_t>(start + n)};
}

const Tensor& param(const Model& m, const std::string& name) {
  const Tensor* t = m.store.find(name);
  if (!t) throw std::runtime_error("missing parameter " + name);
  return *t;
}

/// CE-only reference loop: projection heads, additive fusion and the
/// generator, trained with Adam under the warm-up schedule. No auxiliary
/// module exists here at all.
struct CeOnlyOracle {
  nn::ParameterStore store;
  vision::ViewProjector projector;
  generator::ReportGenerator generator;
  vision::SyntheticFeatureBackend backend;
  nn::Adam adam;
  const corpus::Vocabulary& vocab;
  TrainConfig config;
  long steps = 0;

  CeOnlyOracle(const TrainConfig& c, const corpus::Vocabulary& v)
      : backend([&] {
          auto vc = c.vision;
          vc.d_model = c.model.d_model;
          return vc;
        }()),
        adam(nn::AdamOptions{.clip_norm = c.pretrain.clip_norm}),
        vocab(v),
        config(c) {
    auto vc = c.vision;
    vc.d_model = c.model.d_model;
    Rng vr = Rng::derive(c.seed, "init-vision");
    projector = vision::ViewProjector(store, vc, vr);
    Rng gr = Rng::derive(c.seed, "init-generator");
    generator = generator::ReportGenerator(store, generator_config(c, v.size()), gr);
  }

  void step(const std::vector<const corpus::StudyCase*>& batch) {
    store.zero_grad();
    Tensor total;
    for (const auto* c : batch) {
      const auto f = projector.project(backend.extract(c->frontal_ref, vision::View::frontal));
      const auto l = projector.project(backend.extract(c->lateral_ref, vision::View::lateral));
      const auto target = generator::TargetReport::from_content(vocab.encode_target(c->report, config.model.max_len));
      const Tensor memory = generator.encode_memory(vision::fuse_views(f, l).grid);
      const Tensor ce = generator::cross_entropy_loss(target, generator.decode_teacher_forced(memory, target));
      total = total.defined() ? ag::add(total, ce) : ce;
    }
    ag::backward(ag::scale(total, 1.0 / static_cast<double>(batch.size())));
    ++steps;
    adam.step(store, noam_lr(config.pretrain.lr, config.pretrain.warmup_steps, steps));
  }
};

}  // namespace

TEST(Config, ToyProfileOverrides) {
  const auto toy = profile_defaults("toy");
  EXPECT_EQ(toy.model.d_model, 64);
  EXPECT_EQ(toy.pretrain.batch_size, 8);
  EXPECT_EQ(toy.data.n_cases, 500);
  const auto paper = profile_defaults("paper");
  EXPECT_EQ(paper.model.d_model, 1024);
  EXPECT_EQ(paper.pretrain.batch_size, 6);
  EXPECT_EQ(paper.pretrain.epochs, 60);
  EXPECT_DOUBLE_EQ(paper.pretrain.lr, 1e-4);
  EXPECT_EQ(paper.pretrain.warmup_steps, 10000);
  EXPECT_EQ(paper.rl.batch_size, 2);
  EXPECT_DOUBLE_EQ(paper.rl.lr, 1e-5);
  EXPECT_EQ(paper.rl.period, 15);
  EXPECT_DOUBLE_EQ(paper.mvco.tau_c, 0.1);
  EXPECT_DOUBLE_EQ(paper.dot.tau_s, 0.3);
  EXPECT_EQ(paper.eval.beam_size, 2);
  EXPECT_DOUBLE_EQ(paper.mvco.weight, 1.0);
  EXPECT_DOUBLE_EQ(paper.cmc.weight, 1.0);
  EXPECT_THROW(profile_defaults("huge"), std::invalid_argument);
}

TEST(Config, JsonRoundTripCoversEveryKey) {
  TrainConfig c = tiny_config();
  set_from_string(c, "seed", "17");
  set_from_string(c, "cmc.variant", "js");
  set_from_string(c, "dot.strategy", "argmax");
  set_from_string(c, "mvco.position", "encoder");
  set_from_string(c, "reward.weights", "[1,1,1,1,1,1]");
  const auto j = to_json(c);
  for (const auto& key : config_keys()) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(to_json(from_json(j)), j);

  const auto path = temp_dir("config.json");
  save_config(path, c);
  EXPECT_EQ(to_json(load_config(path)), j);
  std::filesystem::remove(path);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  TrainConfig c = tiny_config();
  EXPECT_THROW(set_from_string(c, "model.width", "3"), std::invalid_argument);
  EXPECT_THROW(set_from_string(c, "model.d_model", "wide"), std::invalid_argument);
  EXPECT_THROW(set_from_string(c, "dot.strategy", "softmax"), std::invalid_argument);
}

TEST(Config, ValidationRules) {
  auto broken = [](auto edit) {
    TrainConfig c = tiny_config();
    edit(c);
    return c;
  };
  EXPECT_NO_THROW(validate(tiny_config()));
  EXPECT_THROW(validate(broken([](TrainConfig& c) { c.pretrain.lr = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(broken([](TrainConfig& c) { c.mvco.tau_c = -1; })), std::invalid_argument);
  EXPECT_THROW(validate(broken([](TrainConfig& c) { c.model.heads = 3; })), std::invalid_argument);
  EXPECT_THROW(validate(broken([](TrainConfig& c) {
                 c.cmc.enabled = false;
                 c.cmc.variant = cmc::Variant::mse;
               })),
               std::invalid_argument);
  EXPECT_THROW(validate(broken([](TrainConfig& c) {
                 c.dot.enabled = false;
                 c.dot.strategy = dot::Strategy::random;
               })),
               std::invalid_argument);
  EXPECT_THROW(validate(broken([](TrainConfig& c) { c.data.n_findings = 9; })), std::invalid_argument);
}

TEST(Schedules, WarmupThenInverseSquareRoot) {
  EXPECT_DOUBLE_EQ(noam_lr(1e-4, 10000, 1), 1e-8);
  EXPECT_DOUBLE_EQ(noam_lr(1e-4, 10000, 5000), 5e-5);
  EXPECT_DOUBLE_EQ(noam_lr(1e-4, 10000, 10000), 1e-4);
  EXPECT_NEAR(noam_lr(1e-4, 10000, 40000), 5e-5, 1e-18);
  for (long s = 1; s < 200; ++s) {
    if (s < 50) EXPECT_LT(noam_lr(1, 50, s), noam_lr(1, 50, s + 1));
    else EXPECT_GE(noam_lr(1, 50, s), noam_lr(1, 50, s + 1));
  }
}

TEST(Schedules, CosineRestartsEveryPeriod) {
  EXPECT_DOUBLE_EQ(cosine_lr(1e-5, 15, 0), 1e-5);
  EXPECT_NEAR(cosine_lr(1e-5, 15, 7), 0.5e-5 * (1 + std::cos(M_PI * 7 / 15)), 1e-20);
  EXPECT_DOUBLE_EQ(cosine_lr(1e-5, 15, 15), 1e-5);
  EXPECT_DOUBLE_EQ(cosine_lr(1e-5, 15, 22), cosine_lr(1e-5, 15, 7));
}

TEST(Variants, FlagBundles) {
  const auto base = profile_defaults("toy");
  ASSERT_EQ(variant_names().size(), 15u);
  for (const auto& v : variant_names()) EXPECT_NO_THROW(validate(apply_variant(base, v))) << v;

  const auto bc = apply_variant(base, "base-cat");
  EXPECT_FALSE(bc.mvco.enabled || bc.dot.enabled || bc.cmc.enabled);
  EXPECT_EQ(bc.input_mode, InputMode::cat);
  const auto all = apply_variant(base, "c2m-dot");
  EXPECT_TRUE(all.mvco.enabled && all.dot.enabled && all.cmc.enabled);
  const auto fus = apply_variant(base, "mvco-fus");
  EXPECT_TRUE(fus.mvco.enabled);
  EXPECT_FALSE(fus.dot.enabled || fus.cmc.enabled);
  EXPECT_EQ(fus.input_mode, InputMode::fused);
  EXPECT_EQ(apply_variant(base, "mvco-encoder").mvco.position, mvco::Position::encoder);
  EXPECT_EQ(apply_variant(base, "mvco-decoder").mvco.position, mvco::Position::decoder);
  EXPECT_EQ(apply_variant(base, "dot-random").dot.strategy, dot::Strategy::random);
  EXPECT_EQ(apply_variant(base, "dot-argmax").dot.strategy, dot::Strategy::argmax);
  EXPECT_EQ(apply_variant(base, "cmc-cl").cmc.variant, cmc::Variant::cl);
  EXPECT_EQ(apply_variant(base, "cmc-mse").cmc.variant, cmc::Variant::mse);
  EXPECT_EQ(apply_variant(base, "cmc-js").cmc.variant, cmc::Variant::js);
  EXPECT_EQ(apply_variant(base, "cmc-kl").cmc.variant, cmc::Variant::kl);
  const auto md = apply_variant(base, "mvco-dot");
  EXPECT_TRUE(md.mvco.enabled && md.dot.enabled && !md.cmc.enabled);
  const auto mc = apply_variant(base, "mvco-cmc");
  EXPECT_TRUE(mc.mvco.enabled && !mc.dot.enabled && mc.cmc.enabled);
  EXPECT_THROW(apply_variant(base, "mvco-everything"), std::invalid_argument);
}

TEST(Losses, DisabledModulesLeaveNoTerm) {
  TrainConfig c = apply_variant(tiny_config(), "base-cat");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  const auto batch = first_cases(t, 0, 4);
  const auto l = t.batch_losses(batch);
  EXPECT_FALSE(l.mvco.defined());
  EXPECT_FALSE(l.cmc.defined());
  EXPECT_EQ(l.total.item(), l.ce.item());
  EXPECT_EQ(t.model().store.find("mvco.semantic_head.first.weight"), nullptr);
  EXPECT_EQ(t.model().store.find("dot.confidence.weight"), nullptr);
  EXPECT_EQ(t.model().store.find("cmc.tau_m"), nullptr);
}

TEST(Losses, TotalIsWeightedSum) {
  TrainConfig c = apply_variant(tiny_config(), "c2m-dot");
  c.mvco.weight = 0.7;
  c.cmc.weight = 0.2;
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  const auto l = t.batch_losses(first_cases(t, 0, 4));
  ASSERT_TRUE(l.mvco.defined() && l.cmc.defined());
  EXPECT_NEAR(l.total.item(), l.ce.item() + 0.7 * l.mvco.item() + 0.2 * l.cmc.item(), 1e-12);
}

TEST(Losses, SingleCaseBatchSkipsContrastiveTerms) {
  TrainConfig c = apply_variant(tiny_config(), "c2m-dot");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  const auto l = t.batch_losses(first_cases(t, 0, 1));
  EXPECT_FALSE(l.mvco.defined());
  EXPECT_FALSE(l.cmc.defined());
  EXPECT_TRUE(std::isfinite(l.total.item()));
}

TEST(Trajectory, DisabledModulesMatchCeOnlyOracleAndZeroWeights) {
  TrainConfig off = apply_variant(tiny_config(), "base-cat");
  off.input_mode = InputMode::fused;
  TrainConfig zero = apply_variant(tiny_config(), "mvco-cmc");
  zero.mvco.weight = 0.0;
  zero.cmc.weight = 0.0;
  const auto data = synthetic_data(off);
  Trainer a(off, data);
  Trainer b(zero, data);
  CeOnlyOracle oracle(off, data.vocab);

  for (std::size_t s = 0; s < 3; ++s) {
    const auto batch = first_cases(a, 4 * s, 4);
    const auto sa = a.pretrain_step(batch);
    const auto sb = b.pretrain_step(batch);
    oracle.step(batch);
    EXPECT_EQ(sa.total, sa.ce);
    EXPECT_EQ(sb.total, sa.total);
  }
  for (const auto& e : oracle.store.entries()) {
    const Matrix& ref = e.tensor.value();
    EXPECT_EQ(param(a.model(), e.name).value(), ref) << e.name;
    EXPECT_EQ(param(b.model(), e.name).value(), ref) << e.name;
  }
  EXPECT_EQ(a.model().store.entries().size(), oracle.store.entries().size());
}

TEST(Trajectory, EpochOneIsDeterministicPerSeed) {
  TrainConfig c = apply_variant(tiny_config(), "c2m-dot");
  const auto data = synthetic_data(c);
  Trainer a(c, data), b(c, data);
  const auto ea = a.pretrain_epoch(1);
  const auto eb = b.pretrain_epoch(1);
  EXPECT_NEAR(ea.total, eb.total, 1e-6);
  EXPECT_EQ(ea.total, eb.total);
  EXPECT_EQ(ea.actions, eb.actions);
  c.seed = 1;
  const auto data1 = synthetic_data(c);
  Trainer other(c, data1);
  EXPECT_NE(other.pretrain_epoch(1).total, ea.total);
}

TEST(Trajectory, GradientsAreFiniteAfterOneStep) {
  TrainConfig c = apply_variant(tiny_config(), "c2m-dot");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  t.pretrain_step(first_cases(t, 0, 4));
  t.model().store.zero_grad();
  ag::backward(t.batch_losses(first_cases(t, 4, 4)).total);
  for (const auto& e : t.model().store.entries()) {
    ASSERT_TRUE(e.tensor.has_grad()) << e.name;
    EXPECT_TRUE(e.tensor.grad().allFinite()) << e.name;
  }
}

TEST(Trajectory, DotActionsCoverAllThreeInTheFirstEpoch) {
  TrainConfig c = apply_variant(tiny_config(), "mvco-dot");
  c.data.n_cases = 120;
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  const auto e = t.pretrain_epoch(1);
  for (long n : e.actions) EXPECT_GT(n, 0);
}

TEST(Trajectory, FrozenSemanticEncodersDoNotMove) {
  TrainConfig c = apply_variant(tiny_config(), "c2m-dot");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  const auto& cs = *t.split_cases("train")[0];
  const Matrix img = t.inputs().encoders().encode_image(cs.frontal_ref, vision::View::frontal);
  const auto ids = data.vocab.encode(cs.report);
  const Matrix txt = t.inputs().encoders().encode_text(ids);
  t.pretrain_epoch(1);
  EXPECT_EQ(t.inputs().encoders().encode_image(cs.frontal_ref, vision::View::frontal), img);
  EXPECT_EQ(t.inputs().encoders().encode_text(ids), txt);
}

TEST(Rl, AdvantagesAreRewardDifferences) {
  const std::vector<double> s = {3.0, 5.0, 2.0}, g = {3.0, 4.0, 2.5};
  const auto a = scst_advantages(s, g);
  EXPECT_EQ(a, (std::vector<double>{0.0, 1.0, -0.5}));
  EXPECT_THROW(scst_advantages(s, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Rl, PolicyGradientIsTranslationInvariant) {
  TrainConfig c = apply_variant(tiny_config(), "base-cat");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  const auto& gen = t.model().generator;
  const auto batch = first_cases(t, 0, 3);
  Rng rng(5);
  std::vector<generator::TargetReport> samples;
  std::vector<Tensor> memories;
  for (const auto* cs : batch) {
    const auto f = t.model().projector.project({t.inputs().features(*cs, vision::View::frontal), vision::View::frontal});
    const auto l = t.model().projector.project({t.inputs().features(*cs, vision::View::lateral), vision::View::lateral});
    memories.push_back(gen.encode_memory(vision::concat_views(f, l).grid));
    samples.push_back(generator::TargetReport::from_content(gen.sample(ag::detach(memories.back()), 12, rng).tokens));
  }
  const std::vector<double> sample_r = {4.0, 7.5, 1.25}, greedy_r = {3.5, 8.0, 1.25};
  auto gradient = [&](double shift, bool tie = false) {
    std::vector<double> s = sample_r, g = tie ? sample_r : greedy_r;
    for (auto& x : s) x += shift;
    for (auto& x : g) x += shift;
    const auto adv = scst_advantages(s, g);
    t.model().store.zero_grad();
    Tensor total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Tensor lp = generator::sequence_log_prob(samples[i], gen.decode_teacher_forced(memories[i], samples[i]));
      const Tensor term = ag::scale(lp, -adv[i] / 3.0);
      total = total.defined() ? ag::add(total, term) : term;
    }
    ag::backward(total);
    std::vector<Matrix> grads;
    for (const auto& e : t.model().store.entries()) grads.push_back(e.tensor.grad());
    return grads;
  };
  const auto g0 = gradient(0.0);
  const auto g1 = gradient(100.0);
  double norm = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < g0.size(); ++i) {
    norm += g0[i].squaredNorm();
    diff += (g0[i] - g1[i]).squaredNorm();
  }
  EXPECT_GT(norm, 0.0);
  EXPECT_LT(std::sqrt(diff / norm), 1e-12);
  for (const auto& m : gradient(2.0, true)) EXPECT_TRUE(m.isZero(0.0));
}

TEST(Rl, StepKeepsParametersFinite) {
  TrainConfig c = apply_variant(tiny_config(), "base-cat");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  const auto s = t.rl_step(first_cases(t, 0, 4), 1e-5);
  EXPECT_TRUE(std::isfinite(s.sample_reward));
  EXPECT_TRUE(std::isfinite(s.baseline_reward));
  for (const auto& e : t.model().store.entries()) EXPECT_TRUE(e.tensor.value().allFinite()) << e.name;
}

TEST(Evaluate, DeterministicAndRoutedByArgmax) {
  TrainConfig c = apply_variant(tiny_config(), "c2m-dot");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  t.pretrain_epoch(1);
  const auto a = t.evaluate("val", dot::AvailableViews::both);
  const auto b = t.evaluate("val", dot::AvailableViews::both);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(a.evaluated, static_cast<long>(data.split.val.size()));

  for (const auto* cs : t.split_cases("val")) {
    const auto f = t.model().projector.project({t.inputs().features(*cs, vision::View::frontal), vision::View::frontal});
    const auto l = t.model().projector.project({t.inputs().features(*cs, vision::View::lateral), vision::View::lateral});
    const Matrix p = (*t.model().confidence)(f, l).value();
    std::size_t expected = 0;
    for (std::size_t k = 1; k < 3; ++k) if (p(0, static_cast<Eigen::Index>(k)) > p(0, static_cast<Eigen::Index>(expected))) expected = k;
    std::size_t action = 99;
    const auto input = t.inference_input(*cs, dot::AvailableViews::both, &action);
    EXPECT_EQ(action, expected);
    EXPECT_EQ(input.grid.value(), dot::make_action_space(f, l).a[expected].grid.value());
    t.inference_input(*cs, dot::AvailableViews::lateral, &action);
    EXPECT_EQ(action, dot::kLateral);
  }
}

TEST(Evaluate, MissingViewsAreSkippedAndCounted) {
  TrainConfig c = apply_variant(tiny_config(), "base-cat");
  auto data = synthetic_data(c);
  const std::string dropped = data.split.val[0];
  for (auto& cs : data.cases) if (cs.case_id == dropped) cs.lateral_ref.clear();
  Trainer t(c, data);
  const auto both = t.evaluate("val", dot::AvailableViews::both);
  const auto frontal = t.evaluate("val", dot::AvailableViews::frontal);
  EXPECT_EQ(both.skipped, 1);
  EXPECT_EQ(frontal.skipped, 0);
  EXPECT_EQ(both.evaluated + 1, frontal.evaluated);
}

TEST(Evaluate, GapNoteIsRelativeBleu4Difference) {
  TrainConfig c = apply_variant(tiny_config(), "mvco-dot");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  t.pretrain_epoch(1);
  const auto r = run_evaluate(t, "test", {dot::AvailableViews::both, dot::AvailableViews::frontal});
  const auto* both = r.find_eval("test", dot::AvailableViews::both);
  const auto* front = r.find_eval("test", dot::AvailableViews::frontal);
  ASSERT_TRUE(both && front);
  const double expected = both->bundle.bleu4 == 0.0 ? 0.0 : std::abs(both->bundle.bleu4 - front->bundle.bleu4) / both->bundle.bleu4;
  EXPECT_DOUBLE_EQ(r.notes["bleu4_relative_gap_frontal"].get<double>(), expected);
}

TEST(Checkpoint, RoundTripAndHashRefusal) {
  TrainConfig c = apply_variant(tiny_config(), "c2m-dot");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  t.pretrain_step(first_cases(t, 0, 4));
  const auto path = temp_dir("ckpt.bin");
  save_checkpoint(path, t.model(), c, data.vocab, "pretrain", 1);
  const auto header = read_checkpoint_header(path);
  EXPECT_EQ(header.phase, "pretrain");
  EXPECT_EQ(header.epoch, 1);
  EXPECT_EQ(header.vocab_tokens, data.vocab.tokens());
  EXPECT_EQ(to_json(header.config), to_json(c));

  TrainConfig fresh_config = c;
  fresh_config.seed = 99;  // different init, same structure
  Model fresh(fresh_config, data.vocab);
  load_checkpoint(path, fresh, fresh_config, data.vocab);
  for (const auto& e : t.model().store.entries()) EXPECT_EQ(param(fresh, e.name).value(), e.tensor.value()) << e.name;

  TrainConfig wider = c;
  wider.model.d_ff = 48;
  Model other(wider, data.vocab);
  EXPECT_THROW(load_checkpoint(path, other, wider, data.vocab), std::runtime_error);
  EXPECT_ANY_THROW(load_checkpoint(path, other, wider, data.vocab, true));
  EXPECT_NE(structure_hash(c, data.vocab.tokens()), structure_hash(wider, data.vocab.tokens()));
  TrainConfig lr_only = c;
  lr_only.pretrain.lr = 0.5;
  EXPECT_EQ(structure_hash(c, data.vocab.tokens()), structure_hash(lr_only, data.vocab.tokens()));
  EXPECT_THROW(read_checkpoint_header(temp_dir("missing.bin")), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Records, RunsAreByteReproducible) {
  TrainConfig c = apply_variant(tiny_config(), "c2m-dot");
  c.pretrain.epochs = 1;
  const auto data = synthetic_data(c);
  std::vector<std::string> records, csvs, ckpts;
  for (int run = 0; run < 2; ++run) {
    const auto dir = temp_dir("run" + std::to_string(run));
    Trainer t(c, data);
    RunOptions o;
    o.out_dir = dir;
    const auto r = run_pretrain(t, o);
    EXPECT_EQ(r.epochs.size(), 1u);
    EXPECT_EQ(r.evaluations.size(), 2u);
    records.push_back(slurp(dir / "run_record.json"));
    csvs.push_back(slurp(dir / "epochs.csv"));
    ckpts.push_back(slurp(dir / "checkpoint_pretrain.bin"));
    std::filesystem::remove_all(dir);
  }
  EXPECT_EQ(records[0], records[1]);
  EXPECT_EQ(csvs[0], csvs[1]);
  EXPECT_EQ(ckpts[0], ckpts[1]);
  EXPECT_FALSE(records[0].empty());
}

TEST(Records, RlRecordsRewardsBeforeAndAfter) {
  TrainConfig c = apply_variant(tiny_config(), "base-cat");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  RunOptions o;
  const auto r = run_rl(t, o);
  EXPECT_EQ(r.epochs.size(), 1u);
  EXPECT_TRUE(r.notes.contains("val_reward_before"));
  EXPECT_TRUE(r.notes.contains("val_reward_after"));
  EXPECT_NE(r.find_eval("val-before-rl", dot::AvailableViews::both), nullptr);
}

TEST(Exports, SemanticEmbeddingsHaveTwoLabelledRowsPerCase) {
  TrainConfig c = apply_variant(tiny_config(), "c2m-dot");
  c.data.n_cases = 300;
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  const auto e = export_semantic_embeddings(t, 50);
  EXPECT_EQ(e.rows.rows(), 100);
  EXPECT_EQ(e.views.size(), 100u);
  EXPECT_EQ(std::count(e.views.begin(), e.views.end(), "frontal"), 50);
  EXPECT_EQ(std::count(e.views.begin(), e.views.end(), "lateral"), 50);
  const auto again = export_semantic_embeddings(t, 50);
  EXPECT_EQ(again.rows, e.rows);
  EXPECT_EQ(again.case_ids, e.case_ids);

  const auto p1 = temp_dir("sem1.csv"), p2 = temp_dir("sem2.csv");
  write_semantic_export(p1, e);
  write_semantic_export(p2, again);
  EXPECT_EQ(slurp(p1), slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST(Exports, SimilarityMatricesAreRowStochasticAndStable) {
  TrainConfig c = apply_variant(tiny_config(), "c2m-dot");
  const auto data = synthetic_data(c);
  Trainer t(c, data);
  const auto e = export_similarity_matrices(t, 6);
  for (const Matrix* m : {&e.frontal_pred, &e.frontal_true, &e.lateral_pred, &e.lateral_true}) {
    ASSERT_EQ(m->rows(), 6);
    for (Eigen::Index i = 0; i < m->rows(); ++i) EXPECT_NEAR(m->row(i).sum(), 1.0, 1e-6);
  }
  const auto d1 = temp_dir("sim1"), d2 = temp_dir("sim2");
  write_similarity_export(d1, e);
  write_similarity_export(d2, export_similarity_matrices(t, 6));
  for (const char* f : {"frontal_pred.csv", "frontal_true.csv", "lateral_pred.csv", "lateral_true.csv", "meta.json"}) {
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}
