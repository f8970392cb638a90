#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "q2opt/distrl.hpp"
#include "q2opt/rng.hpp"

namespace q2opt::net {

using distrl::QuantileVector;
using distrl::TauVector;

enum class Normalization { LayerNorm, None };
enum class HeadKind { ScalarSigmoid, QrFixed, Iqn };

// Architecture of a state-action value network. The trunk is an MLP over
// the concatenated (state, action) vector. Heads: a single sigmoid-bounded
// value, a fixed vector of quantile outputs, or an implicit-quantile head
// that gates the first hidden layer with a cosine tau embedding and is
// evaluated once per requested tau.
struct NetworkSpec {
  int state_dim = 0;
  int action_dim = 0;
  std::vector<int> hidden_layers = {32, 32};
  Normalization normalization = Normalization::LayerNorm;
  HeadKind head = HeadKind::Iqn;
  int qr_n = 100;      // output width of the fixed-quantile head
  int iqn_basis = 64;  // number of cosine basis functions
  int iqn_embed = 0;   // 0 = width of the gated (first hidden) layer
  double q_min = -0.2;
  double q_max = 1.0;

  int input_dim() const { return state_dim + action_dim; }
  int embed_dim() const { return iqn_embed == 0 ? hidden_layers.front() : iqn_embed; }
  int head_width() const { return head == HeadKind::QrFixed ? qr_n : 1; }
};

inline void validate(const NetworkSpec& spec) {
  if (spec.state_dim < 1 || spec.action_dim < 1)
    throw std::invalid_argument("network: state_dim and action_dim must be >= 1");
  if (spec.hidden_layers.empty())
    throw std::invalid_argument("network: at least one hidden layer required");
  for (int w : spec.hidden_layers)
    if (w < 1) throw std::invalid_argument("network: layer widths must be >= 1");
  if (!(spec.q_min < spec.q_max))
    throw std::invalid_argument("network: q_min must be < q_max");
  if (spec.head == HeadKind::QrFixed && spec.qr_n < 1)
    throw std::invalid_argument("network: qr_n must be >= 1");
  if (spec.head == HeadKind::Iqn) {
    if (spec.iqn_basis < 1)
      throw std::invalid_argument("network: iqn_basis must be >= 1");
    if (spec.embed_dim() != spec.hidden_layers.front())
      throw std::invalid_argument(
          "network: iqn_embed must equal the width of the gated layer");
  }
}

inline std::string canonical_string(const NetworkSpec& spec) {
  char buf[64];
  std::string s = "net;s=" + std::to_string(spec.state_dim) +
                  ";a=" + std::to_string(spec.action_dim) + ";h=";
  for (int w : spec.hidden_layers) s += std::to_string(w) + ",";
  s += ";norm=" + std::to_string(static_cast<int>(spec.normalization));
  s += ";head=" + std::to_string(static_cast<int>(spec.head));
  s += ";qrn=" + std::to_string(spec.qr_n);
  s += ";nb=" + std::to_string(spec.iqn_basis);
  s += ";ne=" + std::to_string(spec.embed_dim());
  std::snprintf(buf, sizeof(buf), ";r=%.17g,%.17g", spec.q_min, spec.q_max);
  s += buf;
  return s;
}

// FNV-1a digest of the canonical spec string; stored in snapshots and
// checkpoints so parameters cannot be loaded into a mismatched network.
inline std::uint64_t spec_hash(const NetworkSpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_string(spec)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Immutable once published; the unit of exchange between trainer, Bellman
// updater, and actors.
struct ParamSnapshot {
  std::uint64_t version = 0;
  std::uint64_t spec_hash = 0;
  std::vector<double> values;
};

using GradVector = std::vector<double>;

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes to zero mean / unit variance (epsilon-stabilized), then applies
// the learned affine transform.
inline std::vector<double> layer_normalize(std::span<const double> x,
                                           std::span<const double> gain,
                                           std::span<const double> bias,
                                           double eps = kLayerNormEps) {
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("layer_normalize: need at least 2 elements");
  if (gain.size() != n || bias.size() != n)
    throw std::invalid_argument("layer_normalize: gain/bias shape mismatch");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = gain[i] * ((x[i] - mean) * inv) + bias[i];
  return out;
}

// Gradient of layer_normalize w.r.t. its input, for a given upstream
// gradient on the output.
inline std::vector<double> layer_normalize_input_grad(
    std::span<const double> x, std::span<const double> gain,
    std::span<const double> upstream, double eps = kLayerNormEps) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  double mean_dy = 0.0, mean_dyy = 0.0;
  std::vector<double> yhat(n), dy(n);
  for (std::size_t i = 0; i < n; ++i) {
    yhat[i] = (x[i] - mean) * inv;
    dy[i] = upstream[i] * gain[i];
    mean_dy += dy[i];
    mean_dyy += dy[i] * yhat[i];
  }
  mean_dy /= static_cast<double>(n);
  mean_dyy /= static_cast<double>(n);
  std::vector<double> dx(n);
  for (std::size_t i = 0; i < n; ++i)
    dx[i] = inv * (dy[i] - mean_dy - yhat[i] * mean_dyy);
  return dx;
}

// Offsets of every parameter block inside the flat vector.
struct ParamLayout {
  struct Linear {
    std::size_t w = 0, b = 0;
    int in = 0, out = 0;
  };
  std::vector<Linear> layers;
  std::vector<std::size_t> ln_gain, ln_bias;  // parallel to layers when present
  bool has_layer_norm = false;
  Linear embed;  // cosine embedding, in = n_basis, out = embed_dim
  bool has_embed = false;
  Linear head;
  std::size_t total = 0;
};

// State-action value network over a flat parameter vector. All evaluation
// methods are pure functions of (params, inputs); optimizer state lives
// elsewhere.
class Network {
 public:
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    if (spec_.head == HeadKind::Iqn && spec_.iqn_embed == 0)
      spec_.iqn_embed = spec_.hidden_layers.front();
    hash_ = net::spec_hash(spec_);
    build_layout();
  }

  const NetworkSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return layout_; }
  std::uint64_t hash() const { return hash_; }
  std::size_t param_count() const { return layout_.total; }

  // Hidden weights from a variance-scaled uniform, every bias exactly zero,
  // normalization gains one. Deterministic in (spec, seed).
  ParamSnapshot init_params(std::uint64_t seed) const {
    ParamSnapshot snap;
    snap.version = 0;
    snap.spec_hash = hash_;
    snap.values.assign(layout_.total, 0.0);
    Rng rng(seed);
    auto fill_linear = [&](const ParamLayout::Linear& lin) {
      const double limit = std::sqrt(6.0 / (lin.in + lin.out));
      for (int i = 0; i < lin.in * lin.out; ++i)
        snap.values[lin.w + i] = rng.uniform(-limit, limit);
      // biases stay zero
    };
    for (const auto& lin : layout_.layers) fill_linear(lin);
    if (layout_.has_layer_norm)
      for (std::size_t l = 0; l < layout_.layers.size(); ++l)
        for (int i = 0; i < layout_.layers[l].out; ++i)
          snap.values[layout_.ln_gain[l] + i] = 1.0;
    if (layout_.has_embed) fill_linear(layout_.embed);
    fill_linear(layout_.head);
    return snap;
  }

  TauVector qr_taus() const { return distrl::quantile_midpoints(spec_.qr_n); }

  // Evaluates the quantile head. taus must be empty for the scalar and
  // fixed-quantile heads (the latter carries its own midpoints) and
  // non-empty with entries in [0,1] for the implicit head. Output length is
  // 1, qr_n, or |taus| and every entry lies inside (q_min, q_max).
  QuantileVector forward(const ParamSnapshot& params, std::span<const double> state,
                         std::span<const double> action,
                         const TauVector& taus = {}) const {
    thread_local Cache cache;
    QuantileVector out;
    run_forward(params, state, action, taus, cache, out);
    return out;
  }

  // Exact reverse-mode gradient of <forward(params, ...), upstream> with
  // respect to the flat parameter vector.
  GradVector backward(const ParamSnapshot& params, std::span<const double> state,
                      std::span<const double> action, const TauVector& taus,
                      std::span<const double> upstream) const {
    thread_local Cache cache;
    QuantileVector out;
    run_forward(params, state, action, taus, cache, out);
    if (upstream.size() != out.size())
      throw std::invalid_argument("backward: upstream shape mismatch");
    GradVector grad(layout_.total, 0.0);
    run_backward(params, cache, upstream, grad);
    return grad;
  }

 private:
  struct LayerCache {
    std::vector<double> z;     // pre-normalization
    std::vector<double> yhat;  // normalized, pre-affine (layer norm only)
    double inv_std = 1.0;
    std::vector<double> h;  // post-normalization, pre-activation
    std::vector<double> x;  // post-activation
  };

  struct Branch {
    std::vector<double> cosines;    // cos(pi * i * tau)
    std::vector<double> embed_pre;  // pre-relu embedding
    std::vector<double> embed;      // post-relu embedding
    std::vector<double> gated;      // x1 * embed
    std::vector<LayerCache> layers; // layers 2..L
    std::vector<double> y;          // head pre-squash (width 1 for iqn)
    std::vector<double> out;
  };

  struct Cache {
    std::vector<double> input;
    LayerCache first;
    std::vector<LayerCache> rest;  // scalar/qr path, layers 2..L
    std::vector<Branch> branches;  // iqn path, one per tau
    std::vector<double> y;         // scalar/qr head pre-squash
    std::size_t n_out = 0;
  };

  void build_layout() {
    std::size_t off = 0;
    auto add_linear = [&](int in, int out) {
      ParamLayout::Linear lin;
      lin.in = in;
      lin.out = out;
      lin.w = off;
      off += static_cast<std::size_t>(in) * out;
      lin.b = off;
      off += out;
      return lin;
    };
    layout_.has_layer_norm = spec_.normalization == Normalization::LayerNorm;
    int prev = spec_.input_dim();
    for (int width : spec_.hidden_layers) {
      layout_.layers.push_back(add_linear(prev, width));
      if (layout_.has_layer_norm) {
        layout_.ln_gain.push_back(off);
        off += width;
        layout_.ln_bias.push_back(off);
        off += width;
      }
      prev = width;
    }
    if (spec_.head == HeadKind::Iqn) {
      layout_.has_embed = true;
      layout_.embed = add_linear(spec_.iqn_basis, spec_.embed_dim());
    }
    layout_.head = add_linear(prev, spec_.head_width());
    layout_.total = off;
  }

  static double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  void apply_linear(const ParamSnapshot& p, const ParamLayout::Linear& lin,
                    const std::vector<double>& x, std::vector<double>& z) const {
    z.assign(static_cast<std::size_t>(lin.out), 0.0);
    const double* w = p.values.data() + lin.w;
    const double* b = p.values.data() + lin.b;
    for (int o = 0; o < lin.out; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * lin.in;
      double acc = b[o];
      for (int i = 0; i < lin.in; ++i) acc += row[i] * x[i];
      z[o] = acc;
    }
  }

  void run_layer(const ParamSnapshot& p, std::size_t l,
                 const std::vector<double>& x_in, LayerCache& lc) const {
    apply_linear(p, layout_.layers[l], x_in, lc.z);
    const int n = layout_.layers[l].out;
    if (layout_.has_layer_norm && n >= 2) {
      const double* gain = p.values.data() + layout_.ln_gain[l];
      const double* bias = p.values.data() + layout_.ln_bias[l];
      double mean = 0.0;
      for (double v : lc.z) mean += v;
      mean /= n;
      double var = 0.0;
      for (double v : lc.z) var += (v - mean) * (v - mean);
      var /= n;
      lc.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
      lc.yhat.resize(n);
      lc.h.resize(n);
      for (int i = 0; i < n; ++i) {
        lc.yhat[i] = (lc.z[i] - mean) * lc.inv_std;
        lc.h[i] = gain[i] * lc.yhat[i] + bias[i];
      }
    } else {
      lc.h = lc.z;
    }
    lc.x.resize(n);
    for (int i = 0; i < n; ++i) lc.x[i] = lc.h[i] > 0.0 ? lc.h[i] : 0.0;
  }

  void run_forward(const ParamSnapshot& params, std::span<const double> state,
                   std::span<const double> action, const TauVector& taus,
                   Cache& c, QuantileVector& out) const {
    if (params.values.size() != layout_.total)
      throw std::invalid_argument("forward: parameter length mismatch");
    if (static_cast<int>(state.size()) != spec_.state_dim ||
        static_cast<int>(action.size()) != spec_.action_dim)
      throw std::invalid_argument("forward: input dimension mismatch");
    const bool iqn = spec_.head == HeadKind::Iqn;
    if (iqn) {
      if (taus.empty()) throw std::invalid_argument("forward: iqn head requires taus");
      for (double t : taus)
        if (!(t >= 0.0 && t <= 1.0))
          throw std::invalid_argument("forward: tau outside [0,1]");
    } else if (!taus.empty()) {
      throw std::invalid_argument("forward: taus only apply to the iqn head");
    }

    c.input.resize(spec_.input_dim());
    std::copy(state.begin(), state.end(), c.input.begin());
    std::copy(action.begin(), action.end(), c.input.begin() + spec_.state_dim);

    run_layer(params, 0, c.input, c.first);
    const std::size_t n_layers = layout_.layers.size();
    const double range = spec_.q_max - spec_.q_min;

    if (!iqn) {
      c.rest.resize(n_layers > 1 ? n_layers - 1 : 0);
      const std::vector<double>* x = &c.first.x;
      for (std::size_t l = 1; l < n_layers; ++l) {
        run_layer(params, l, *x, c.rest[l - 1]);
        x = &c.rest[l - 1].x;
      }
      apply_linear(params, layout_.head, *x, c.y);
      out.resize(c.y.size());
      for (std::size_t k = 0; k < c.y.size(); ++k)
        out[k] = spec_.q_min + range * sigmoid(c.y[k]);
      c.n_out = out.size();
      c.branches.clear();
      return;
    }

    const int nb = spec_.iqn_basis;
    const int ne = spec_.embed_dim();
    c.branches.resize(taus.size());
    out.resize(taus.size());
    for (std::size_t k = 0; k < taus.size(); ++k) {
      Branch& br = c.branches[k];
      br.cosines.resize(nb);
      for (int i = 0; i < nb; ++i)
        br.cosines[i] = std::cos(std::numbers::pi * i * taus[k]);
      // embedding: e_j = relu(sum_i cos(pi i tau) w_ij + b_j)
      br.embed_pre.assign(ne, 0.0);
      const double* we = params.values.data() + layout_.embed.w;
      const double* be = params.values.data() + layout_.embed.b;
      for (int i = 0; i < nb; ++i) {
        const double ci = br.cosines[i];
        const double* row = we + static_cast<std::size_t>(i) * ne;
        for (int j = 0; j < ne; ++j) br.embed_pre[j] += ci * row[j];
      }
      br.embed.resize(ne);
      for (int j = 0; j < ne; ++j) {
        br.embed_pre[j] += be[j];
        br.embed[j] = br.embed_pre[j] > 0.0 ? br.embed_pre[j] : 0.0;
      }
      br.gated.resize(ne);
      for (int j = 0; j < ne; ++j) br.gated[j] = c.first.x[j] * br.embed[j];

      br.layers.resize(n_layers > 1 ? n_layers - 1 : 0);
      const std::vector<double>* x = &br.gated;
      for (std::size_t l = 1; l < n_layers; ++l) {
        run_layer(params, l, *x, br.layers[l - 1]);
        x = &br.layers[l - 1].x;
      }
      apply_linear(params, layout_.head, *x, br.y);
      br.out.resize(1);
      br.out[0] = spec_.q_min + range * sigmoid(br.y[0]);
      out[k] = br.out[0];
    }
    c.n_out = out.size();
  }

  // Accumulates linear-layer gradients and returns the input gradient.
  void back_linear(const ParamSnapshot& p, const ParamLayout::Linear& lin,
                   const std::vector<double>& x_in, const std::vector<double>& dz,
                   GradVector& grad, std::vector<double>& dx) const {
    double* gw = grad.data() + lin.w;
    double* gb = grad.data() + lin.b;
    const double* w = p.values.data() + lin.w;
    dx.assign(static_cast<std::size_t>(lin.in), 0.0);
    for (int o = 0; o < lin.out; ++o) {
      const double d = dz[o];
      gb[o] += d;
      double* grow = gw + static_cast<std::size_t>(o) * lin.in;
      const double* wrow = w + static_cast<std::size_t>(o) * lin.in;
      for (int i = 0; i < lin.in; ++i) {
        grow[i] += d * x_in[i];
        dx[i] += d * wrow[i];
      }
    }
  }

  // Backward through one hidden layer: relu -> (layer norm) -> linear.
  void back_layer(const ParamSnapshot& p, std::size_t l, const LayerCache& lc,
                  const std::vector<double>& x_in, std::vector<double>& dx_out,
                  GradVector& grad, std::vector<double>& scratch) const {
    const int n = layout_.layers[l].out;
    scratch.resize(n);
    for (int i = 0; i < n; ++i)
      scratch[i] = lc.h[i] > 0.0 ? dx_out[i] : 0.0;  // relu mask
    if (layout_.has_layer_norm && n >= 2) {
      const double* gain = p.values.data() + layout_.ln_gain[l];
      double* ggain = grad.data() + layout_.ln_gain[l];
      double* gbias = grad.data() + layout_.ln_bias[l];
      double mean_dy = 0.0, mean_dyy = 0.0;
      std::vector<double> dy(n);
      for (int i = 0; i < n; ++i) {
        ggain[i] += scratch[i] * lc.yhat[i];
        gbias[i] += scratch[i];
        dy[i] = scratch[i] * gain[i];
        mean_dy += dy[i];
        mean_dyy += dy[i] * lc.yhat[i];
      }
      mean_dy /= n;
      mean_dyy /= n;
      for (int i = 0; i < n; ++i)
        scratch[i] = lc.inv_std * (dy[i] - mean_dy - lc.yhat[i] * mean_dyy);
    }
    back_linear(p, layout_.layers[l], x_in, scratch, grad, dx_out);
  }

  void run_backward(const ParamSnapshot& params, const Cache& c,
                    std::span<const double> upstream, GradVector& grad) const {
    const double range = spec_.q_max - spec_.q_min;
    const std::size_t n_layers = layout_.layers.size();
    std::vector<double> dx, scratch;

    if (spec_.head != HeadKind::Iqn) {
      std::vector<double> dy(c.y.size());
      for (std::size_t k = 0; k < c.y.size(); ++k) {
        const double s = sigmoid(c.y[k]);
        dy[k] = upstream[k] * range * s * (1.0 - s);
      }
      const std::vector<double>& x_last =
          n_layers > 1 ? c.rest.back().x : c.first.x;
      back_linear(params, layout_.head, x_last, dy, grad, dx);
      for (std::size_t l = n_layers; l-- > 1;) {
        const std::vector<double>& x_in = l > 1 ? c.rest[l - 2].x : c.first.x;
        back_layer(params, l, c.rest[l - 1], x_in, dx, grad, scratch);
      }
      back_layer(params, 0, c.first, c.input, dx, grad, scratch);
      return;
    }

    const int nb = spec_.iqn_basis;
    const int ne = spec_.embed_dim();
    std::vector<double> dx1(ne, 0.0);
    std::vector<double> dy(1), de(ne);
    double* gwe = grad.data() + layout_.embed.w;
    double* gbe = grad.data() + layout_.embed.b;
    for (std::size_t k = 0; k < c.branches.size(); ++k) {
      const Branch& br = c.branches[k];
      const double s = sigmoid(br.y[0]);
      dy[0] = upstream[k] * range * s * (1.0 - s);
      const std::vector<double>& x_last =
          n_layers > 1 ? br.layers.back().x : br.gated;
      back_linear(params, layout_.head, x_last, dy, grad, dx);
      for (std::size_t l = n_layers; l-- > 1;) {
        const std::vector<double>& x_in = l > 1 ? br.layers[l - 2].x : br.gated;
        back_layer(params, l, br.layers[l - 1], x_in, dx, grad, scratch);
      }
      // dx is now the gradient on the gated features
      for (int j = 0; j < ne; ++j) {
        dx1[j] += dx[j] * br.embed[j];
        de[j] = br.embed_pre[j] > 0.0 ? dx[j] * c.first.x[j] : 0.0;
        gbe[j] += de[j];
      }
      for (int i = 0; i < nb; ++i) {
        const double ci = br.cosines[i];
        double* grow = gwe + static_cast<std::size_t>(i) * ne;
        for (int j = 0; j < ne; ++j) grow[j] += ci * de[j];
      }
    }
    back_layer(params, 0, c.first, c.input, dx1, grad, scratch);
  }

  NetworkSpec spec_;
  ParamLayout layout_;
  std::uint64_t hash_ = 0;
};

// Adam optimizer state over the flat parameter vector.
struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam update with bias correction. A gradient containing any
// non-finite entry rejects the whole step: parameters and optimizer state
// are left untouched and false is returned. On success the snapshot version
// is incremented.
inline bool adam_step(ParamSnapshot& params, const GradVector& grad,
                      AdamState& st, double lr) {
  if (grad.size() != params.values.size())
    throw std::invalid_argument("adam_step: gradient layout mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) return false;
  if (st.m.empty()) {
    st.m.assign(params.values.size(), 0.0);
    st.v.assign(params.values.size(), 0.0);
  }
  st.t += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params.values[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
  }
  params.version += 1;
  return true;
}

}  // namespace q2opt::net
