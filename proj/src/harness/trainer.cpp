#include "c2m/harness/trainer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <stdexcept>

namespace c2m::harness {

namespace {

ag::Tensor mean_of(const std::vector<ag::Tensor>& terms) {
  ag::Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ag::add(total, terms[i]);
  return ag::scale(total, 1.0 / static_cast<double>(terms.size()));
}

ag::Tensor plus(const ag::Tensor& a, const ag::Tensor& b) {
  if (!a.defined()) return b;
  if (!b.defined()) return a;
  return ag::add(a, b);
}

double value_or_zero(const ag::Tensor& t) { return t.defined() ? t.item() : 0.0; }

}  // namespace

std::vector<double> scst_advantages(std::span<const double> sample_rewards,
                                    std::span<const double> baseline_rewards) {
  if (sample_rewards.size() != baseline_rewards.size()) {
    throw std::invalid_argument("scst_advantages: reward lists differ in length");
  }
  std::vector<double> a(sample_rewards.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = sample_rewards[i] - baseline_rewards[i];
  return a;
}

Trainer::Trainer(TrainConfig config, const corpus::PreparedData& data)
    : config_(std::move(config)),
      data_(data),
      model_((validate(config_), config_), data.vocab),
      inputs_(config_, data.vocab),
      pretrain_optimizer_(nn::AdamOptions{.clip_norm = config_.pretrain.clip_norm}),
      rl_optimizer_(nn::AdamOptions{.clip_norm = config_.pretrain.clip_norm}),
      shuffle_rng_(Rng::derive(config_.seed, "shuffle")),
      dot_rng_(Rng::derive(config_.seed, "dot")),
      rl_rng_(Rng::derive(config_.seed, "rl")) {}

std::vector<const corpus::StudyCase*> Trainer::split_cases(const std::string& split) const {
  if (split == "train") return data_.select(data_.split.train);
  if (split == "val") return data_.select(data_.split.val);
  if (split == "test") return data_.select(data_.split.test);
  throw std::invalid_argument("unknown split '" + split + "'");
}

Trainer::Embedded Trainer::embed(const corpus::StudyCase& c) const {
  return {model_.projector.project({inputs_.features(c, vision::View::frontal), vision::View::frontal}),
          model_.projector.project({inputs_.features(c, vision::View::lateral), vision::View::lateral})};
}

vision::ViewEmbedding Trainer::training_input(const Embedded& e, int* action) {
  *action = -1;
  if (config_.dot.enabled) {
    const ag::Tensor probs = (*model_.confidence)(e.frontal, e.lateral);
    const dot::ActionSample s =
        dot::sample_strategy(probs, config_.dot.strategy, config_.dot.tau_s, dot_rng_);
    *action = static_cast<int>(s.chosen);
    return dot::select_input(dot::make_action_space(e.frontal, e.lateral), s);
  }
  if (config_.input_mode == InputMode::cat) return vision::concat_views(e.frontal, e.lateral);
  return vision::fuse_views(e.frontal, e.lateral);
}

BatchLosses Trainer::batch_losses(CaseBatch batch, bool include_ce) {
  if (batch.empty()) throw std::invalid_argument("batch_losses: empty batch");
  const auto& gen = model_.generator;
  const bool use_mvco = config_.mvco.enabled;
  const bool use_cmc = config_.cmc.enabled && config_.cmc.mode == cmc::Mode::soft;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const int d_sem = inputs_.encoders().dim();

  BatchLosses out;
  std::vector<ag::Tensor> ce_terms, x_frontal, x_lateral, text_pred;
  ag::Matrix img_frontal(n, d_sem), img_lateral(n, d_sem), text_true(n, d_sem);

  for (Eigen::Index i = 0; i < n; ++i) {
    const corpus::StudyCase& c = *batch[static_cast<std::size_t>(i)];
    const Embedded e = embed(c);
    const auto target = generator::TargetReport::from_content(inputs_.target(c));

    if (use_mvco) {
      for (const auto* view : {&e.frontal, &e.lateral}) {
        const ag::Tensor memory = gen.encode_memory(view->grid);
        const ag::Tensor input =
            config_.mvco.position == mvco::Position::decoder
                ? mvco::decoder_semantic_input(gen.decode_teacher_forced(memory, target))
                : mvco::encoder_semantic_input(memory);
        (view == &e.frontal ? x_frontal : x_lateral).push_back((*model_.semantic)(input));
      }
    }

    if (include_ce || use_cmc) {
      int action = -1;
      const vision::ViewEmbedding input = training_input(e, &action);
      if (action >= 0) ++out.actions[static_cast<std::size_t>(action)];
      const generator::DecoderOutput decoded =
          gen.decode_teacher_forced(gen.encode_memory(input.grid), target);
      if (include_ce) ce_terms.push_back(generator::cross_entropy_loss(target, decoded));
      if (use_cmc) {
        text_pred.push_back(inputs_.encoders().encode_text_soft(decoded.probs));
        text_true.row(i) = inputs_.encoders().encode_text(target.targets());
        img_frontal.row(i) = inputs_.image_semantic(c, vision::View::frontal);
        img_lateral.row(i) = inputs_.image_semantic(c, vision::View::lateral);
      }
    }
  }

  if (include_ce) out.ce = mean_of(ce_terms);
  if (n < 2 && (use_mvco || use_cmc)) {
    spdlog::debug("batch of {} case(s): contrastive and consistency terms skipped", n);
  }
  if (use_mvco && n >= 2) {
    out.mvco = mvco::mvco_loss(ag::concat_rows(x_frontal), ag::concat_rows(x_lateral),
                               config_.mvco.tau_c);
  }
  if (use_cmc && n >= 2) {
    cmc::CmcBatch b{img_frontal, img_lateral, ag::concat_rows(text_pred), text_true};
    out.cmc = cmc::cmc_loss(b, model_.temperature(), config_.cmc.variant, config_.cmc.kl_order);
  }
  out.total = out.ce;
  if (out.mvco.defined()) out.total = plus(out.total, ag::scale(out.mvco, config_.mvco.weight));
  if (out.cmc.defined()) out.total = plus(out.total, ag::scale(out.cmc, config_.cmc.weight));
  return out;
}

StepStats Trainer::pretrain_step(CaseBatch batch) {
  model_.store.zero_grad();
  const BatchLosses losses = batch_losses(batch);
  StepStats s;
  s.ce = value_or_zero(losses.ce);
  s.mvco = value_or_zero(losses.mvco);
  s.cmc = value_or_zero(losses.cmc);
  s.total = value_or_zero(losses.total);
  s.actions = losses.actions;
  if (!std::isfinite(s.total)) throw std::runtime_error("pretraining loss became non-finite");
  ag::backward(losses.total);
  ++pretrain_steps_;
  s.lr = noam_lr(config_.pretrain.lr, config_.pretrain.warmup_steps, pretrain_steps_);
  s.grad_norm = pretrain_optimizer_.step(model_.store, s.lr);
  return s;
}

double Trainer::reward(std::span<const int> ids, const corpus::StudyCase& c) const {
  const corpus::TokenSequence hyp = data_.vocab.decode(ids);
  return metrics::mixed_reward(hyp, c.report, config_.reward);
}

StepStats Trainer::rl_step(CaseBatch batch, double lr) {
  if (batch.empty()) throw std::invalid_argument("rl_step: empty batch");
  model_.store.zero_grad();
  const auto& gen = model_.generator;
  const int max_len = config_.model.max_len;
  const std::size_t n = batch.size();

  StepStats s;
  s.lr = lr;
  std::vector<ag::Tensor> memories;
  std::vector<std::vector<int>> samples, greedies;
  std::vector<double> sample_rewards, baseline_rewards;
  for (const corpus::StudyCase* c : batch) {
    int action = -1;
    const vision::ViewEmbedding input = training_input(embed(*c), &action);
    if (action >= 0) ++s.actions[static_cast<std::size_t>(action)];
    const ag::Tensor memory = gen.encode_memory(input.grid);
    const ag::Tensor frozen = ag::detach(memory);
    samples.push_back(gen.sample(frozen, max_len, rl_rng_).tokens);
    greedies.push_back(gen.greedy(frozen, max_len).tokens);
    sample_rewards.push_back(reward(samples.back(), *c));
    baseline_rewards.push_back(reward(greedies.back(), *c));
    memories.push_back(memory);
  }

  if (config_.cmc.enabled && config_.cmc.mode == cmc::Mode::reward && n >= 2) {
    const int d_sem = inputs_.encoders().dim();
    const auto rows = static_cast<Eigen::Index>(n);
    ag::Matrix img_f(rows, d_sem), img_l(rows, d_sem), truth(rows, d_sem), sampled(rows, d_sem),
        greedy(rows, d_sem);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      img_f.row(r) = inputs_.image_semantic(*batch[i], vision::View::frontal);
      img_l.row(r) = inputs_.image_semantic(*batch[i], vision::View::lateral);
      truth.row(r) = inputs_.encoders().encode_text(inputs_.target(*batch[i]));
      sampled.row(r) = inputs_.encoders().encode_text(samples[i]);
      greedy.row(r) = inputs_.encoders().encode_text(greedies[i]);
    }
    ag::NoGradGuard no_grad;
    const ag::Tensor tau = model_.temperature();
    const double l_sample =
        cmc::cmc_loss({img_f, img_l, ag::Tensor::constant(sampled), truth}, tau,
                      config_.cmc.variant, config_.cmc.kl_order).item();
    const double l_greedy =
        cmc::cmc_loss({img_f, img_l, ag::Tensor::constant(greedy), truth}, tau,
                      config_.cmc.variant, config_.cmc.kl_order).item();
    for (std::size_t i = 0; i < n; ++i) {
      sample_rewards[i] -= config_.cmc.weight * l_sample;
      baseline_rewards[i] -= config_.cmc.weight * l_greedy;
    }
  }

  const std::vector<double> advantages = scst_advantages(sample_rewards, baseline_rewards);
  ag::Tensor total;
  for (std::size_t i = 0; i < n; ++i) {
    s.sample_reward += sample_rewards[i] / static_cast<double>(n);
    s.baseline_reward += baseline_rewards[i] / static_cast<double>(n);
    if (advantages[i] == 0.0) continue;
    const auto target = generator::TargetReport::from_content(samples[i]);
    const ag::Tensor log_prob =
        generator::sequence_log_prob(target, gen.decode_teacher_forced(memories[i], target));
    total = plus(total, ag::scale(log_prob, -advantages[i] / static_cast<double>(n)));
  }
  if (config_.rl.keep_aux_losses) {
    const BatchLosses aux = batch_losses(batch, false);
    s.mvco = value_or_zero(aux.mvco);
    s.cmc = value_or_zero(aux.cmc);
    total = plus(total, aux.total);
  }
  if (!total.defined()) return s;
  s.total = total.item();
  if (!std::isfinite(s.total)) throw std::runtime_error("RL loss became non-finite");
  ag::backward(total);
  s.grad_norm = rl_optimizer_.step(model_.store, lr);
  return s;
}

namespace {

void accumulate(EpochStats& e, const StepStats& s) {
  ++e.steps;
  e.ce += s.ce;
  e.mvco += s.mvco;
  e.cmc += s.cmc;
  e.total += s.total;
  e.sample_reward += s.sample_reward;
  e.baseline_reward += s.baseline_reward;
  e.lr = s.lr;
  for (std::size_t k = 0; k < dot::kActions; ++k) e.actions[k] += s.actions[k];
}

void finish(EpochStats& e) {
  if (e.steps == 0) return;
  const double n = static_cast<double>(e.steps);
  e.ce /= n;
  e.mvco /= n;
  e.cmc /= n;
  e.total /= n;
  e.sample_reward /= n;
  e.baseline_reward /= n;
}

}  // namespace

EpochStats Trainer::pretrain_epoch(int epoch) {
  std::vector<const corpus::StudyCase*> cases = split_cases("train");
  shuffle_rng_.shuffle(cases.begin(), cases.end());
  EpochStats e;
  e.phase = "pretrain";
  e.epoch = epoch;
  const auto size = static_cast<std::size_t>(config_.pretrain.batch_size);
  for (std::size_t start = 0; start < cases.size(); start += size) {
    const std::size_t count = std::min(size, cases.size() - start);
    accumulate(e, pretrain_step(CaseBatch(cases.data() + start, count)));
  }
  finish(e);
  return e;
}

EpochStats Trainer::rl_epoch(int epoch) {
  std::vector<const corpus::StudyCase*> cases = split_cases("train");
  shuffle_rng_.shuffle(cases.begin(), cases.end());
  EpochStats e;
  e.phase = "rl";
  e.epoch = epoch;
  const double lr = cosine_lr(config_.rl.lr, config_.rl.period, epoch);
  const auto size = static_cast<std::size_t>(config_.rl.batch_size);
  for (std::size_t start = 0; start < cases.size(); start += size) {
    const std::size_t count = std::min(size, cases.size() - start);
    accumulate(e, rl_step(CaseBatch(cases.data() + start, count), lr));
  }
  finish(e);
  return e;
}

vision::ViewEmbedding Trainer::inference_input(const corpus::StudyCase& c,
                                               dot::AvailableViews views,
                                               std::size_t* action) const {
  ag::NoGradGuard no_grad;
  const auto project = [&](vision::View v) {
    return model_.projector.project({inputs_.features(c, v), v});
  };
  if (views == dot::AvailableViews::frontal || views == dot::AvailableViews::lateral) {
    const std::size_t routed = dot::route_inference(views, {});
    if (action) *action = routed;
    return project(routed == dot::kFrontal ? vision::View::frontal : vision::View::lateral);
  }
  const vision::ViewEmbedding frontal = project(vision::View::frontal);
  const vision::ViewEmbedding lateral = project(vision::View::lateral);
  if (config_.dot.enabled) {
    const ag::Tensor probs = (*model_.confidence)(frontal, lateral);
    const std::size_t routed = dot::route_inference(
        views, {probs.value().data(), static_cast<std::size_t>(probs.value().size())});
    if (action) *action = routed;
    return dot::make_action_space(frontal, lateral).a[routed];
  }
  if (action) *action = dot::kFused;
  if (config_.input_mode == InputMode::cat) return vision::concat_views(frontal, lateral);
  return vision::fuse_views(frontal, lateral);
}

std::vector<std::string> Trainer::generate(const corpus::StudyCase& c, dot::AvailableViews views,
                                           std::size_t* action) const {
  ag::NoGradGuard no_grad;
  const vision::ViewEmbedding input = inference_input(c, views, action);
  const ag::Tensor memory = model_.generator.encode_memory(input.grid);
  const generator::Hypothesis h =
      model_.generator.beam(memory, config_.eval.beam_size, config_.model.max_len);
  return data_.vocab.decode(h.tokens);
}

EvalResult Trainer::evaluate(const std::string& split, dot::AvailableViews views) {
  EvalResult r;
  r.split = split;
  r.views = views;
  std::vector<metrics::Tokens> hyps, refs;
  for (const corpus::StudyCase* c : split_cases(split)) {
    const bool missing =
        (views != dot::AvailableViews::lateral && c->frontal_ref.empty()) ||
        (views != dot::AvailableViews::frontal && c->lateral_ref.empty());
    if (missing) {
      ++r.skipped;
      continue;
    }
    std::size_t action = 0;
    hyps.push_back(generate(*c, views, &action));
    refs.push_back(c->report);
    if (config_.dot.enabled) ++r.actions[action];
    ++r.evaluated;
  }
  if (r.skipped > 0) {
    spdlog::warn("evaluate {}: skipped {} case(s) missing the requested view", split, r.skipped);
  }
  r.bundle = metrics::score_corpus(hyps, refs, config_.eval.bleu_mode, config_.reward);
  return r;
}

}  // namespace c2m::harness
