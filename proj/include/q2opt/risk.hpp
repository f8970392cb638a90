#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "q2opt/distrl.hpp"
#include "q2opt/rng.hpp"

namespace q2opt::risk {

using distrl::QuantileVector;
using distrl::TauVector;

enum class RiskKind { Neutral, Cpw, Wang, Cvar, Norm, Pow };

// A distortion beta(tau; eta) of quantile probabilities. Applied to the taus
// fed to an implicit-quantile head it shifts which part of the return
// distribution the policy optimizes for.
struct RiskMetricSpec {
  RiskKind kind = RiskKind::Neutral;
  double eta = 0.0;
};

inline void validate(const RiskMetricSpec& spec) {
  switch (spec.kind) {
    case RiskKind::Neutral:
      break;
    case RiskKind::Cpw:
      if (!(spec.eta > 0.0)) throw std::invalid_argument("cpw: eta must be > 0");
      break;
    case RiskKind::Wang:
    case RiskKind::Pow:
      break;
    case RiskKind::Cvar:
      if (!(spec.eta > 0.0 && spec.eta <= 1.0))
        throw std::invalid_argument("cvar: eta must be in (0, 1]");
      break;
    case RiskKind::Norm:
      if (!(spec.eta >= 1.0 && spec.eta == std::floor(spec.eta)))
        throw std::invalid_argument("norm: eta must be an integer >= 1");
      break;
  }
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// Inverse standard normal CDF, Wichura's AS 241 (PPND16) rational
// approximation, |error| < 1e-15 on (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-6) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

// beta(tau; eta). Norm is stochastic: it replaces tau by the mean of eta
// fresh U[0,1] draws, so it needs a caller-supplied rng; the deterministic
// kinds ignore it. Wang endpoints are defined by continuity.
inline double distort(const RiskMetricSpec& spec, double tau, Rng* rng = nullptr) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw std::invalid_argument("distort: tau must be in [0,1]");
  validate(spec);
  switch (spec.kind) {
    case RiskKind::Neutral:
      return tau;
    case RiskKind::Cpw: {
      if (tau == 0.0) return 0.0;
      if (tau == 1.0) return 1.0;
      const double num = std::pow(tau, spec.eta);
      const double den =
          std::pow(num + std::pow(1.0 - tau, spec.eta), 1.0 / spec.eta);
      return std::clamp(num / den, 0.0, 1.0);
    }
    case RiskKind::Wang: {
      if (tau == 0.0) return 0.0;
      if (tau == 1.0) return 1.0;
      return std::clamp(normal_cdf(normal_quantile(tau) + spec.eta), 0.0, 1.0);
    }
    case RiskKind::Cvar:
      return spec.eta * tau;
    case RiskKind::Norm: {
      if (rng == nullptr)
        throw std::invalid_argument("distort: norm requires an rng");
      const int draws = static_cast<int>(spec.eta);
      double acc = 0.0;
      for (int i = 0; i < draws; ++i) acc += rng->uniform();
      return acc / draws;
    }
    case RiskKind::Pow: {
      const double expo = 1.0 / (1.0 + std::abs(spec.eta));
      if (spec.eta >= 0.0) return std::pow(tau, expo);
      return 1.0 - std::pow(1.0 - tau, expo);
    }
  }
  throw std::logic_error("distort: unreachable");
}

inline TauVector distort_vector(const RiskMetricSpec& spec, const TauVector& taus,
                                Rng* rng = nullptr) {
  TauVector out(taus.size());
  for (std::size_t i = 0; i < taus.size(); ++i) out[i] = distort(spec, taus[i], rng);
  return out;
}

enum class ScoreKind { Mean, Weighted };

// Reducer psi that turns a quantile vector into the scalar the policy
// maximizes. Weighted form: (1/N) * sum w_i q_i with w normalized to sum N,
// so all-ones weights reproduce the mean.
struct ScoreFn {
  ScoreKind kind = ScoreKind::Mean;
  std::vector<double> weights;
};

inline double score(const QuantileVector& q, const ScoreFn& psi) {
  if (q.empty()) throw std::invalid_argument("score: empty quantile vector");
  const double n = static_cast<double>(q.size());
  if (psi.kind == ScoreKind::Mean)
    return std::accumulate(q.begin(), q.end(), 0.0) / n;
  if (psi.weights.size() != q.size())
    throw std::invalid_argument("score: weight length mismatch");
  double wsum = 0.0;
  for (double w : psi.weights) {
    if (w < 0.0) throw std::invalid_argument("score: weights must be >= 0");
    wsum += w;
  }
  if (wsum <= 0.0) throw std::invalid_argument("score: weights sum to zero");
  const double scale = n / wsum;
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) acc += psi.weights[i] * scale * q[i];
  return acc / n;
}

inline std::string to_string(const RiskMetricSpec& spec) {
  std::ostringstream os;
  switch (spec.kind) {
    case RiskKind::Neutral: return "neutral";
    case RiskKind::Cpw: os << "cpw("; break;
    case RiskKind::Wang: os << "wang("; break;
    case RiskKind::Cvar: os << "cvar("; break;
    case RiskKind::Norm: os << "norm("; break;
    case RiskKind::Pow: os << "pow("; break;
  }
  os << spec.eta << ")";
  return os.str();
}

// Parses "neutral", "cvar(0.25)", "wang(-0.75)", "cpw(0.71)", "norm(3)",
// "pow(-2)". This is the config-file syntax for risk attitudes.
inline RiskMetricSpec parse_risk(const std::string& text) {
  std::string s = text;
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }),
          s.end());
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "neutral") return {RiskKind::Neutral, 0.0};
  const auto open = s.find('(');
  if (open == std::string::npos || s.back() != ')')
    throw std::invalid_argument("risk: expected kind(eta), got '" + text + "'");
  const std::string kind = s.substr(0, open);
  const std::string arg = s.substr(open + 1, s.size() - open - 2);
  RiskMetricSpec spec;
  if (kind == "cpw") spec.kind = RiskKind::Cpw;
  else if (kind == "wang") spec.kind = RiskKind::Wang;
  else if (kind == "cvar") spec.kind = RiskKind::Cvar;
  else if (kind == "norm") spec.kind = RiskKind::Norm;
  else if (kind == "pow") spec.kind = RiskKind::Pow;
  else throw std::invalid_argument("risk: unknown kind '" + kind + "'");
  std::size_t pos = 0;
  try {
    spec.eta = std::stod(arg, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("risk: bad eta '" + arg + "'");
  }
  if (pos != arg.size()) throw std::invalid_argument("risk: bad eta '" + arg + "'");
  validate(spec);
  return spec;
}

}  // namespace q2opt::risk
