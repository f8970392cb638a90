#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "q2opt/approximator.hpp"
#include "q2opt/distrl.hpp"
#include "q2opt/rng.hpp"

using namespace q2opt;
using namespace q2opt::distrl;

TEST_CASE("quantile midpoints") {
  REQUIRE(quantile_midpoints(1) == TauVector{0.5});
  REQUIRE(quantile_midpoints(2) == TauVector{0.25, 0.75});
  REQUIRE(quantile_midpoints(4) == TauVector{0.125, 0.375, 0.625, 0.875});
  const auto t = quantile_midpoints(100);
  for (std::size_t i = 1; i < t.size(); ++i) REQUIRE(t[i] > t[i - 1]);
  REQUIRE_THROWS_AS(quantile_midpoints(0), std::invalid_argument);
}

TEST_CASE("sampled taus are seeded, bounded, and uniform on average") {
  Rng a(5), b(5);
  REQUIRE(sample_taus(32, a) == sample_taus(32, b));
  Rng rng(17);
  double acc = 0.0;
  const int n = 100000;
  const auto taus = sample_taus(n, rng);
  for (double t : taus) {
    REQUIRE(t >= 0.0);
    REQUIRE(t <= 1.0);
    acc += t;
  }
  REQUIRE(std::abs(acc / n - 0.5) < 0.01);
}

TEST_CASE("bellman target") {
  LossConfig cfg;
  SECTION("terminal drops the bootstrap term") {
    const auto t = bellman_target(1.0, true, {0.5, 0.7, 0.9}, cfg);
    REQUIRE(t == QuantileVector{1.0, 1.0, 1.0});
  }
  SECTION("non-terminal is r + gamma v") {
    const auto t = bellman_target(-0.01, false, {0.5, 0.7}, cfg);
    REQUIRE(t[0] == Catch::Approx(0.44).margin(1e-15));
    REQUIRE(t[1] == Catch::Approx(0.62).margin(1e-15));
  }
  SECTION("zero reward and zero values stay zero") {
    const auto t = bellman_target(0.0, false, {0.0, 0.0, 0.0}, cfg);
    REQUIRE(t == QuantileVector{0.0, 0.0, 0.0});
  }
  SECTION("targets clamp to the representable range") {
    const auto t = bellman_target(1.0, false, {1.0}, cfg);
    REQUIRE(t[0] == cfg.q_max);
    const auto lo = bellman_target(-1.0, false, {0.0}, cfg);
    REQUIRE(lo[0] == cfg.q_min);
  }
  SECTION("affine in v with slope gamma before clamping") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const double v = rng.uniform(-0.1, 0.9);
      const double dv = rng.uniform(0.0, 0.05);
      const auto t0 = bellman_target(0.0, false, {v}, cfg);
      const auto t1 = bellman_target(0.0, false, {v + dv}, cfg);
      REQUIRE(t1[0] - t0[0] == Catch::Approx(cfg.gamma * dv).margin(1e-12));
    }
  }
}

TEST_CASE("td error matrix") {
  SECTION("direct subtraction") {
    const auto m = td_errors({1.0}, {0.4, 0.6});
    REQUIRE(m.num_targets == 1);
    REQUIRE(m.num_predictions == 2);
    REQUIRE(m.at(0, 0) == Catch::Approx(0.6));
    REQUIRE(m.at(0, 1) == Catch::Approx(0.4));
  }
  SECTION("zero diagonal for identical vectors") {
    const QuantileVector q{0.1, 0.2, 0.3};
    const auto m = td_errors(q, q);
    for (std::size_t i = 0; i < q.size(); ++i) REQUIRE(m.at(i, i) == 0.0);
  }
  SECTION("shape follows operand sizes") {
    const auto m = td_errors({1, 2, 3}, {1, 2});
    REQUIRE(m.num_targets == 3);
    REQUIRE(m.num_predictions == 2);
  }
  SECTION("antisymmetry under swapped roles") {
    Rng rng(9);
    QuantileVector a(4), b(3);
    for (auto& v : a) v = rng.uniform();
    for (auto& v : b) v = rng.uniform();
    const auto ab = td_errors(a, b);
    const auto ba = td_errors(b, a);
    for (std::size_t j = 0; j < a.size(); ++j)
      for (std::size_t i = 0; i < b.size(); ++i)
        REQUIRE(ab.at(j, i) == Catch::Approx(-ba.at(i, j)).margin(1e-15));
  }
}

TEST_CASE("huber quantile loss values") {
  REQUIRE(huber_quantile_loss(0.0, 0.3, 0.002) == 0.0);
  // quadratic branch: 0.5 * (0.5 * 0.001^2)
  REQUIRE(huber_quantile_loss(0.001, 0.5, 0.002) ==
          Catch::Approx(2.5e-7).margin(1e-12));
  // linear branch: |0.9 - 1| * 0.002 * (0.01 - 0.001)
  REQUIRE(huber_quantile_loss(-0.01, 0.9, 0.002) ==
          Catch::Approx(1.8e-6).margin(1e-12));
}

TEST_CASE("huber quantile loss properties") {
  const double kappa = 0.002;
  Rng rng(21);
  SECTION("nonnegative, zero only at zero") {
    for (int i = 0; i < 1000; ++i) {
      const double d = rng.uniform(-0.5, 0.5);
      const double tau = rng.uniform();
      const double v = huber_quantile_loss(d, tau, kappa);
      REQUIRE(v >= 0.0);
      if (d != 0.0 && tau > 0.0 && tau < 1.0) REQUIRE(v > 0.0);
    }
  }
  SECTION("value and derivative continuous at the kappa switch") {
    for (double tau : {0.1, 0.5, 0.9}) {
      for (double sign : {-1.0, 1.0}) {
        const double at = sign * kappa;
        const double eps = 1e-10;
        const double below = huber_quantile_loss(at - eps, tau, kappa);
        const double above = huber_quantile_loss(at + eps, tau, kappa);
        REQUIRE(std::abs(above - below) < 1e-12);
        const double gbelow = huber_quantile_grad(at - eps, tau, kappa);
        const double gabove = huber_quantile_grad(at + eps, tau, kappa);
        REQUIRE(std::abs(gabove - gbelow) < 1e-9);
      }
    }
  }
  SECTION("linear-regime asymmetry ratio is tau/(1-tau)") {
    for (double tau : {0.2, 0.5, 0.73, 0.9}) {
      const double d = 0.05;  // > kappa
      const double ratio = huber_quantile_loss(d, tau, kappa) /
                           huber_quantile_loss(-d, tau, kappa);
      REQUIRE(ratio == Catch::Approx(tau / (1.0 - tau)).epsilon(1e-12));
    }
  }
  SECTION("analytic gradient matches finite differences") {
    for (int i = 0; i < 500; ++i) {
      double d = rng.uniform(-0.01, 0.01);
      if (std::abs(d) < 1e-6 || std::abs(std::abs(d) - kappa) < 1e-6) continue;
      const double tau = rng.uniform();
      const double h = 1e-9;
      const double fd = (huber_quantile_loss(d + h, tau, kappa) -
                         huber_quantile_loss(d - h, tau, kappa)) /
                        (2 * h);
      REQUIRE(huber_quantile_grad(d, tau, kappa) ==
              Catch::Approx(fd).margin(1e-6));
    }
  }
}

TEST_CASE("qr loss") {
  LossConfig cfg;
  SECTION("constant and equal vectors give zero loss and gradient") {
    const QuantileVector q{0.3, 0.3, 0.3};
    const auto res = qr_loss(q, q, quantile_midpoints(3), cfg);
    REQUIRE(res.loss == 0.0);
    for (double g : res.grad_q) REQUIRE(g == 0.0);
  }
  SECTION("two-target hand sum") {
    const QuantileVector q{0.2};
    const QuantileVector q_hat{0.1, 0.5};
    const TauVector taus{0.5};
    const auto res = qr_loss(q, q_hat, taus, cfg);
    const double expected = 0.5 * (huber_quantile_loss(-0.1, 0.5, cfg.kappa) +
                                   huber_quantile_loss(0.3, 0.5, cfg.kappa));
    REQUIRE(res.loss == Catch::Approx(expected).epsilon(1e-14));
  }
  SECTION("gradient matches finite differences") {
    Rng rng(33);
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 1 + rng.uniform_int(6);
      const int m = 1 + rng.uniform_int(6);
      QuantileVector q(n), q_hat(m);
      for (auto& v : q) v = rng.uniform(-0.1, 0.9);
      for (auto& v : q_hat) v = rng.uniform(-0.1, 0.9);
      const auto taus = quantile_midpoints(n);
      const auto res = qr_loss(q, q_hat, taus, cfg);
      const double h = 1e-7;
      for (int i = 0; i < n; ++i) {
        QuantileVector qp = q, qm = q;
        qp[i] += h;
        qm[i] -= h;
        const double fd = (qr_loss(qp, q_hat, taus, cfg).loss -
                           qr_loss(qm, q_hat, taus, cfg).loss) /
                          (2 * h);
        const double denom = std::max(std::abs(fd), 1e-8);
        REQUIRE(std::abs(res.grad_q[i] - fd) / denom < 1e-4);
      }
    }
  }
  SECTION("shape mismatch rejected") {
    REQUIRE_THROWS_AS(qr_loss({0.1, 0.2}, {0.1}, {0.5}, cfg), std::invalid_argument);
  }
}

TEST_CASE("free quantile vector trained on the pairwise loss converges to the analytic quantiles") {
  // scalar targets from Z = {0 w.p. 0.7, 1 w.p. 0.3}; a free q vector
  // trained with single-sample targets must approach Z's quantile function.
  LossConfig cfg;
  const int n = 20;
  const auto taus = quantile_midpoints(n);
  net::ParamSnapshot q;
  q.values.assign(n, 0.5);
  net::AdamState opt;
  Rng rng(101);
  std::vector<double> samples(10000);
  for (auto& z : samples) z = rng.uniform() < 0.7 ? 0.0 : 1.0;
  const double lrs[3] = {0.05, 0.02, 0.005};
  for (int epoch = 0; epoch < 3; ++epoch) {
    for (double z : samples) {
      const auto res = qr_loss(q.values, {z}, taus, cfg);
      REQUIRE(adam_step(q, res.grad_q, opt, lrs[epoch]));
    }
  }
  double w1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double analytic = taus[i] <= 0.7 ? 0.0 : 1.0;
    w1 += std::abs(q.values[i] - analytic);
  }
  w1 /= n;
  REQUIRE(w1 < 0.05);
}

TEST_CASE("single-tau quantile regression finds the tau-quantile of a Bernoulli mixture") {
  // Z = 0.25 w.p. 0.5, 0.75 w.p. 0.5; the tau-quantile is 0.25 for
  // tau < 0.5 and 0.75 for tau > 0.5.
  LossConfig cfg;
  for (double tau : {0.2, 0.8}) {
    net::ParamSnapshot q;
    q.values.assign(1, 0.5);
    net::AdamState opt;
    Rng rng(55);
    for (int step = 0; step < 20000; ++step) {
      const double z = rng.uniform() < 0.5 ? 0.25 : 0.75;
      const auto res = qr_loss(q.values, {z}, {tau}, cfg);
      adam_step(q, res.grad_q, opt, step < 10000 ? 0.02 : 0.002);
    }
    const double analytic = tau < 0.5 ? 0.25 : 0.75;
    REQUIRE(std::abs(q.values[0] - analytic) < 0.03);
  }
}

TEST_CASE("scalar cross entropy") {
  SECTION("matched halves give log 2") {
    REQUIRE(scalar_ce_loss(0.5, 0.5).loss == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SECTION("p = t minimizes over p") {
    for (double t : {0.2, 0.5, 0.8}) {
      const double at_t = scalar_ce_loss(t, t).loss;
      for (double dp : {-0.05, 0.05}) REQUIRE(scalar_ce_loss(t + dp, t).loss > at_t);
    }
  }
  SECTION("confident correct prediction drives loss to zero") {
    REQUIRE(scalar_ce_loss(1.0 - 1e-12, 1.0).loss < 1e-9);
  }
  SECTION("gradient matches finite differences") {
    const double h = 1e-7;
    for (double p : {0.2, 0.5, 0.9}) {
      for (double t : {0.0, 0.3, 1.0}) {
        const double fd =
            (scalar_ce_loss(p + h, t).loss - scalar_ce_loss(p - h, t).loss) / (2 * h);
        REQUIRE(scalar_ce_loss(p, t).grad_pred == Catch::Approx(fd).margin(1e-5));
      }
    }
  }
  SECTION("pred outside (0,1) rejected") {
    REQUIRE_THROWS_AS(scalar_ce_loss(0.0, 0.5), std::invalid_argument);
    REQUIRE_THROWS_AS(scalar_ce_loss(1.0, 0.5), std::invalid_argument);
  }
}
