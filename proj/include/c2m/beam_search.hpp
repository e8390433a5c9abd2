#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <limits>
#include <vector>

namespace c2m::generator {

/// A left-to-right token model that beam search can drive. `log_probs(s)`
/// gives next-token log-probabilities in state `s`; `advance(s, t)` returns
/// the state after consuming token `t`.
template <typename M>
concept StepModel = requires(const M& m, const typename M::State& s, int token) {
  { m.initial() } -> std::convertible_to<typename M::State>;
  { m.log_probs(s) } -> std::convertible_to<std::vector<double>>;
  { m.advance(s, token) } -> std::convertible_to<typename M::State>;
};

struct Hypothesis {
  std::vector<int> tokens;  // includes the terminating EOS when one was emitted
  double log_prob = 0.0;

  /// Length-normalized score used for the final ranking.
  double score() const {
    return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size());
  }
};

/// Argmax decoding; ties resolve to the lowest token id.
template <StepModel M>
Hypothesis greedy_decode(const M& model, int max_len, int eos) {
  Hypothesis h;
  auto state = model.initial();
  for (int step = 0; step < max_len; ++step) {
    const std::vector<double> lp = model.log_probs(state);
    const auto best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    h.tokens.push_back(best);
    h.log_prob += lp[static_cast<std::size_t>(best)];
    if (best == eos) break;
    if (step + 1 < max_len) state = model.advance(state, best);
  }
  return h;
}

/// Beam search. Each step expands every live beam by every token and keeps
/// the `beam_size` best expansions by cumulative log-probability; expansions
/// ending in EOS retire to the finished pool (and still use a slot). Beams
/// alive at `max_len` are finished as-is. The returned hypothesis maximizes
/// log-probability divided by length. beam_size = 1 reproduces greedy_decode.
template <StepModel M>
Hypothesis beam_search(const M& model, int beam_size, int max_len, int eos) {
  if (beam_size < 1) beam_size = 1;
  struct Live {
    Hypothesis hyp;
    typename M::State state;
  };
  struct Candidate {
    std::size_t beam;
    int token;
    double log_prob;
  };

  std::vector<Live> live;
  live.push_back({Hypothesis{}, model.initial()});
  std::vector<Hypothesis> finished;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < live.size(); ++b) {
      const std::vector<double> lp = model.log_probs(live[b].state);
      for (std::size_t t = 0; t < lp.size(); ++t) {
        candidates.push_back({b, static_cast<int>(t), live[b].hyp.log_prob + lp[t]});
      }
    }
    // Stable: equal scores keep (beam, token) order.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
    if (candidates.size() > static_cast<std::size_t>(beam_size)) {
      candidates.resize(static_cast<std::size_t>(beam_size));
    }

    std::vector<Live> next;
    for (const auto& c : candidates) {
      Hypothesis h = live[c.beam].hyp;
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      if (c.token == eos) {
        finished.push_back(std::move(h));
      } else if (step + 1 == max_len) {
        finished.push_back(std::move(h));
      } else {
        next.push_back({std::move(h), model.advance(live[c.beam].state, c.token)});
      }
    }
    live = std::move(next);
  }

  Hypothesis best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (auto& h : finished) {
    if (h.score() > best_score) {
      best_score = h.score();
      best = h;
    }
  }
  return best;
}

}  // namespace c2m::generator
