#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "q2opt/approximator.hpp"
#include "q2opt/distrl.hpp"
#include "q2opt/risk.hpp"
#include "q2opt/rng.hpp"

namespace q2opt::cem {

enum class Mode { Move = 0, CloseGripper = 1, OpenGripper = 2, Terminate = 3 };
inline constexpr int kNumModes = 4;

// Hybrid action: scaled 4-DOF displacement (dx, dy, dz, dphi), each in
// [-1, 1], plus a discrete mode.
struct HybridAction {
  std::array<double, 4> cont{};
  Mode mode = Mode::Move;
};

inline constexpr int kActionEncodingDim = 8;  // 4 continuous + one-hot mode

inline std::array<double, kActionEncodingDim> encode_action(const HybridAction& a) {
  std::array<double, kActionEncodingDim> enc{};
  for (int i = 0; i < 4; ++i) enc[i] = a.cont[i];
  enc[4 + static_cast<int>(a.mode)] = 1.0;
  return enc;
}

struct CemConfig {
  int iterations = 2;
  int samples = 64;
  double elite_fraction = 0.1;
  double init_sigma = 0.5;
  double sigma_floor = 1e-3;
};

// Sampling distribution the optimizer refits: a diagonal Gaussian over the
// continuous dims and a categorical over modes.
struct CemState {
  std::array<double, 4> mean{};
  std::array<double, 4> sigma{};
  std::array<double, kNumModes> mode_probs{};
};

inline HybridAction random_action(Rng& rng) {
  HybridAction a;
  for (auto& c : a.cont) c = rng.uniform(-1.0, 1.0);
  a.mode = static_cast<Mode>(rng.uniform_int(kNumModes));
  return a;
}

// Iteratively samples candidate actions, refits the sampling distribution to
// the top elite_fraction, and returns the best-scoring action ever sampled.
// Out-of-bounds Gaussian samples are clamped rather than rejected so the
// evaluation budget stays fixed.
template <class ScoreFn>
HybridAction cem_optimize(ScoreFn&& score, const CemConfig& cfg, Rng& rng) {
  if (cfg.iterations < 1 || cfg.samples < 1)
    throw std::invalid_argument("cem: iterations and samples must be >= 1");
  const int n_elite = std::clamp(
      static_cast<int>(cfg.elite_fraction * cfg.samples), 1, cfg.samples);

  CemState st;
  st.mean.fill(0.0);
  st.sigma.fill(cfg.init_sigma);
  st.mode_probs.fill(1.0 / kNumModes);

  std::vector<HybridAction> actions(cfg.samples);
  std::vector<double> scores(cfg.samples);
  std::vector<int> order(cfg.samples);

  HybridAction best{};
  double best_score = -std::numeric_limits<double>::infinity();

  for (int it = 0; it < cfg.iterations; ++it) {
    for (int s = 0; s < cfg.samples; ++s) {
      HybridAction a;
      for (int d = 0; d < 4; ++d)
        a.cont[d] = std::clamp(st.mean[d] + st.sigma[d] * rng.normal(), -1.0, 1.0);
      double u = rng.uniform();
      int m = kNumModes - 1;
      double acc = 0.0;
      for (int k = 0; k < kNumModes; ++k) {
        acc += st.mode_probs[k];
        if (u < acc) {
          m = k;
          break;
        }
      }
      a.mode = static_cast<Mode>(m);
      actions[s] = a;
      scores[s] = score(static_cast<const HybridAction&>(a));
      if (scores[s] > best_score) {
        best_score = scores[s];
        best = a;
      }
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    // refit to elites
    std::array<double, 4> mean{}, var{};
    std::array<int, kNumModes> mode_count{};
    for (int e = 0; e < n_elite; ++e) {
      const HybridAction& a = actions[order[e]];
      for (int d = 0; d < 4; ++d) mean[d] += a.cont[d];
      mode_count[static_cast<int>(a.mode)] += 1;
    }
    for (int d = 0; d < 4; ++d) mean[d] /= n_elite;
    for (int e = 0; e < n_elite; ++e) {
      const HybridAction& a = actions[order[e]];
      for (int d = 0; d < 4; ++d)
        var[d] += (a.cont[d] - mean[d]) * (a.cont[d] - mean[d]);
    }
    for (int d = 0; d < 4; ++d) {
      st.mean[d] = mean[d];
      st.sigma[d] = std::max(std::sqrt(var[d] / n_elite), cfg.sigma_floor);
    }
    // add-one smoothing keeps every mode reachable
    for (int k = 0; k < kNumModes; ++k)
      st.mode_probs[k] =
          (mode_count[k] + 1.0) / (n_elite + static_cast<double>(kNumModes));
  }
  return best;
}

// Greedy risk-scored policy: builds the score closure for the given head
// (implicit head: one fresh U[0,1] tau batch per decision, distorted by the
// risk metric; fixed-quantile head: its own midpoints; scalar head: the
// plain value) and hands it to the optimizer. The stochastic Norm distortion
// redraws per evaluated candidate.
inline HybridAction policy_act(std::span<const double> state,
                               const net::Network& network,
                               const net::ParamSnapshot& params,
                               const risk::RiskMetricSpec& rm,
                               const risk::ScoreFn& psi, const CemConfig& cfg,
                               int iqn_tau_samples, Rng& rng) {
  using net::HeadKind;
  const HeadKind head = network.spec().head;
  if (head == HeadKind::Iqn) {
    if (iqn_tau_samples < 1)
      throw std::invalid_argument("policy_act: iqn_tau_samples must be >= 1");
    distrl::TauVector base = distrl::sample_taus(iqn_tau_samples, rng);
    if (rm.kind == risk::RiskKind::Norm) {
      auto score_fn = [&](const HybridAction& a) {
        distrl::TauVector taus = risk::distort_vector(rm, base, &rng);
        const auto q = network.forward(params, state, encode_action(a), taus);
        return risk::score(q, psi);
      };
      return cem_optimize(score_fn, cfg, rng);
    }
    distrl::TauVector taus = risk::distort_vector(rm, base);
    auto score_fn = [&](const HybridAction& a) {
      const auto q = network.forward(params, state, encode_action(a), taus);
      return risk::score(q, psi);
    };
    return cem_optimize(score_fn, cfg, rng);
  }
  if (head == HeadKind::QrFixed) {
    auto score_fn = [&](const HybridAction& a) {
      const auto q = network.forward(params, state, encode_action(a));
      return risk::score(q, psi);
    };
    return cem_optimize(score_fn, cfg, rng);
  }
  auto score_fn = [&](const HybridAction& a) {
    return network.forward(params, state, encode_action(a))[0];
  };
  return cem_optimize(score_fn, cfg, rng);
}

// With probability epsilon replace the greedy action by a uniform random
// valid one.
inline HybridAction epsilon_greedy(const HybridAction& greedy, double epsilon,
                                   Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("epsilon_greedy: epsilon must be in [0,1]");
  if (epsilon > 0.0 && rng.uniform() < epsilon) return random_action(rng);
  return greedy;
}

}  // namespace q2opt::cem
