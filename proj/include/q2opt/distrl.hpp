#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "q2opt/rng.hpp"

namespace q2opt::distrl {

// Probabilities in [0,1] at which a quantile function is queried.
using TauVector = std::vector<double>;
// Predicted (or target) inverse-CDF values, in return units.
using QuantileVector = std::vector<double>;

struct LossConfig {
  double kappa = 0.002;  // quadratic/linear switch of the Huber quantile loss
  double gamma = 0.9;    // discount
  // Representable return range; targets are clamped into it because
  // r + gamma*v can exceed what a sigmoid-bounded head can produce.
  double q_min = -0.2;
  double q_max = 1.0;
};

// One environment step, the unit of replay and datasets. The action is kept
// in its wire encoding (4 continuous dims + discrete mode index).
struct Transition {
  std::vector<double> state;
  std::array<double, 4> action_cont{};
  int action_mode = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
  std::string policy_id;
  std::int64_t episode_id = 0;
  int step_index = 0;
};

// Pairwise TD errors delta[j][i] = q_hat[j] - q[i].
struct TdErrorMatrix {
  std::size_t num_targets = 0;      // j range
  std::size_t num_predictions = 0;  // i range
  std::vector<double> delta;        // row-major, j * num_predictions + i

  double at(std::size_t j, std::size_t i) const {
    return delta[j * num_predictions + i];
  }
};

// Fixed quantile midpoints tau_i = (2i - 1) / (2N), i = 1..N.
inline TauVector quantile_midpoints(int n) {
  if (n < 1) throw std::invalid_argument("quantile_midpoints: n must be >= 1");
  TauVector taus(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) taus[i] = (2.0 * i + 1.0) / (2.0 * n);
  return taus;
}

inline TauVector sample_taus(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_taus: n must be >= 1");
  TauVector taus(static_cast<std::size_t>(n));
  for (auto& t : taus) t = rng.uniform();
  return taus;
}

// r*1 + gamma*v element-wise, clamped to the representable range; terminal
// transitions drop the bootstrap term entirely.
inline QuantileVector bellman_target(double reward, bool terminal,
                                     const QuantileVector& v,
                                     const LossConfig& cfg) {
  if (v.empty()) throw std::invalid_argument("bellman_target: empty value vector");
  QuantileVector target(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double raw = terminal ? reward : reward + cfg.gamma * v[k];
    target[k] = std::clamp(raw, cfg.q_min, cfg.q_max);
  }
  return target;
}

inline TdErrorMatrix td_errors(const QuantileVector& q_hat, const QuantileVector& q) {
  if (q_hat.empty() || q.empty())
    throw std::invalid_argument("td_errors: empty operand");
  TdErrorMatrix m;
  m.num_targets = q_hat.size();
  m.num_predictions = q.size();
  m.delta.resize(m.num_targets * m.num_predictions);
  for (std::size_t j = 0; j < m.num_targets; ++j)
    for (std::size_t i = 0; i < m.num_predictions; ++i)
      m.delta[j * m.num_predictions + i] = q_hat[j] - q[i];
  return m;
}

// Asymmetric kappa-smoothed pinball loss:
//   rho_tau(delta) = |tau - 1{delta < 0}| * L_kappa(delta)
//   L_kappa(delta) = delta^2 / 2            for |delta| <= kappa
//                    kappa*(|delta| - kappa/2) otherwise
inline double huber_quantile_loss(double delta, double tau, double kappa) {
  const double weight = std::abs(tau - (delta < 0.0 ? 1.0 : 0.0));
  const double a = std::abs(delta);
  const double huber =
      a <= kappa ? 0.5 * delta * delta : kappa * (a - 0.5 * kappa);
  return weight * huber;
}

// d rho / d delta. The delta = 0 subgradient is taken as 0.
inline double huber_quantile_grad(double delta, double tau, double kappa) {
  if (delta == 0.0) return 0.0;
  const double weight = std::abs(tau - (delta < 0.0 ? 1.0 : 0.0));
  const double dhuber =
      std::abs(delta) <= kappa ? delta : kappa * (delta > 0.0 ? 1.0 : -1.0);
  return weight * dhuber;
}

struct QrLossResult {
  double loss = 0.0;
  std::vector<double> grad_q;  // d loss / d q_i
};

// sum_i mean_j rho_{tau_i}(q_hat_j - q_i), with its exact gradient w.r.t. q.
inline QrLossResult qr_loss(const QuantileVector& q, const QuantileVector& q_hat,
                            const TauVector& taus, const LossConfig& cfg) {
  if (q.size() != taus.size())
    throw std::invalid_argument("qr_loss: |taus| must equal |q|");
  if (q.empty() || q_hat.empty())
    throw std::invalid_argument("qr_loss: empty operand");
  QrLossResult res;
  res.grad_q.assign(q.size(), 0.0);
  const double inv_m = 1.0 / static_cast<double>(q_hat.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    double acc = 0.0;
    double gacc = 0.0;
    for (std::size_t j = 0; j < q_hat.size(); ++j) {
      const double delta = q_hat[j] - q[i];
      acc += huber_quantile_loss(delta, taus[i], cfg.kappa);
      gacc -= huber_quantile_grad(delta, taus[i], cfg.kappa);  // d delta/d q_i = -1
    }
    res.loss += acc * inv_m;
    res.grad_q[i] = gacc * inv_m;
  }
  return res;
}

struct CeLossResult {
  double loss = 0.0;
  double grad_pred = 0.0;  // d loss / d pred
};

// Binary cross entropy between a sigmoid-scale prediction and a target that
// was rescaled into [0,1].
inline CeLossResult scalar_ce_loss(double pred, double target) {
  if (!(pred > 0.0 && pred < 1.0))
    throw std::invalid_argument("scalar_ce_loss: pred must be in (0,1)");
  CeLossResult res;
  res.loss = -target * std::log(pred) - (1.0 - target) * std::log(1.0 - pred);
  res.grad_pred = (pred - target) / (pred * (1.0 - pred));
  return res;
}

}  // namespace q2opt::distrl
