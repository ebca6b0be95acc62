#pragma once

// Parametric reward heads r_phi: FeatureGrid -> RewardField.
//
// Two head families share one parameter container:
//   linear  r(s) = w . f(s) + b
//   msfcn   multi-scale fully convolutional network:
//
//     in -> conv3x3(pre0) -> relu -> conv3x3(pre1) -> relu ---+---------------------+
//                                                             |                     |
//                                          avgpool2x2 -> conv(trunk0) -> relu       conv(skip0) -> relu
//                                          -> conv(trunk1) -> relu -> bilinear x2   -> conv(skip1) -> relu
//                                                             |                     |
//                                                             +---- concat ---------+
//                                           -> conv3x3(post) -> relu -> conv1x1 -> r
//
// All convolutions zero-pad. Gradients are exact reverse mode.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cfirl/errors.hpp"
#include "cfirl/features.hpp"
#include "cfirl/grid.hpp"

namespace cfirl {

enum class HeadKind { linear, msfcn };

inline std::string to_string(HeadKind kind) { return kind == HeadKind::linear ? "linear" : "msfcn"; }

inline HeadKind parse_head_kind(const std::string& name) {
  if (name == "linear") return HeadKind::linear;
  if (name == "msfcn") return HeadKind::msfcn;
  throw ValidationError("unknown head kind '" + name + "'");
}

struct HeadConfig {
  HeadKind kind = HeadKind::linear;
  int in_channels = 0;
  std::array<int, 2> prepool{64, 32};
  std::array<int, 2> skip{32, 16};
  std::array<int, 2> trunk{32, 32};
  int postpool = 48;

  bool operator==(const HeadConfig&) const = default;
};

struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;

  bool operator==(const Tensor&) const = default;
};

struct RewardParams {
  HeadConfig config;
  std::uint64_t seed = 0;
  std::vector<Tensor> tensors;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.values.size();
    return n;
  }

  bool operator==(const RewardParams&) const = default;
};

/// Gradients share the tensor layout of the parameters they belong to.
using ParamGrads = std::vector<Tensor>;

namespace detail {

inline std::size_t conv_param_count(int in, int out, int k) {
  return static_cast<std::size_t>(out) * in * k * k + out;
}

struct ConvSpec {
  const char* name;
  int in;
  int out;
  int k;
};

inline std::vector<ConvSpec> msfcn_layers(const HeadConfig& c) {
  return {
      {"pre0", c.in_channels, c.prepool[0], 3},
      {"pre1", c.prepool[0], c.prepool[1], 3},
      {"skip0", c.prepool[1], c.skip[0], 3},
      {"skip1", c.skip[0], c.skip[1], 3},
      {"trunk0", c.prepool[1], c.trunk[0], 3},
      {"trunk1", c.trunk[0], c.trunk[1], 3},
      {"post", c.trunk[1] + c.skip[1], c.postpool, 3},
      {"head", c.postpool, 1, 1},
  };
}

}  // namespace detail

/// Closed-form parameter count of a head configuration.
inline std::size_t analytic_parameter_count(const HeadConfig& config) {
  if (config.kind == HeadKind::linear) return static_cast<std::size_t>(config.in_channels) + 1;
  std::size_t n = 0;
  for (const auto& l : detail::msfcn_layers(config)) n += detail::conv_param_count(l.in, l.out, l.k);
  return n;
}

inline void validate_head_config(const HeadConfig& config) {
  require(config.in_channels >= 1, "reward head needs at least one input channel");
  if (config.kind == HeadKind::msfcn) {
    for (int w : {config.prepool[0], config.prepool[1], config.skip[0], config.skip[1], config.trunk[0],
                  config.trunk[1], config.postpool}) {
      require(w >= 1, "msfcn layer widths must be positive");
    }
  }
}

/// Deterministic fan-in scaled initialisation: weights ~ N(0, gain / fan_in)
/// with gain 2 before a rectifier and 1 otherwise; biases start at zero.
inline RewardParams init_params(const HeadConfig& config, std::uint64_t seed) {
  validate_head_config(config);
  RewardParams params;
  params.config = config;
  params.seed = seed;
  std::mt19937_64 rng(seed);
  auto normal_tensor = [&](std::string name, std::vector<int> shape, double stddev) {
    Tensor t{std::move(name), std::move(shape), {}};
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    std::normal_distribution<double> dist(0.0, stddev);
    t.values.resize(n);
    for (double& v : t.values) v = dist(rng);
    return t;
  };
  if (config.kind == HeadKind::linear) {
    params.tensors.push_back(normal_tensor("weight", {config.in_channels}, 1.0 / std::sqrt(config.in_channels)));
    params.tensors.push_back(Tensor{"bias", {1}, {0.0}});
    return params;
  }
  for (const auto& l : detail::msfcn_layers(config)) {
    const double fan_in = static_cast<double>(l.in) * l.k * l.k;
    const double gain = std::string(l.name) == "head" ? 1.0 : 2.0;
    params.tensors.push_back(normal_tensor(std::string(l.name) + ".weight", {l.out, l.in, l.k, l.k},
                                           std::sqrt(gain / fan_in)));
    params.tensors.push_back(Tensor{std::string(l.name) + ".bias", {l.out}, std::vector<double>(l.out, 0.0)});
  }
  return params;
}

inline ParamGrads zero_grads_like(const RewardParams& params) {
  ParamGrads g = params.tensors;
  for (auto& t : g) std::fill(t.values.begin(), t.values.end(), 0.0);
  return g;
}

namespace nn {

// Activations are [channels][height][width] in a flat vector.
struct Activation {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> v;

  Activation() = default;
  Activation(int c, int h, int w) : channels(c), height(h), width(w), v(static_cast<std::size_t>(c) * h * w, 0.0) {}
  double* plane(int c) { return v.data() + static_cast<std::size_t>(c) * height * width; }
  const double* plane(int c) const { return v.data() + static_cast<std::size_t>(c) * height * width; }
};

inline Activation conv_forward(const Activation& in, const Tensor& weight, const Tensor& bias) {
  const int out_c = weight.shape[0];
  const int in_c = weight.shape[1];
  const int k = weight.shape[2];
  const int pad = k / 2;
  const int h = in.height;
  const int w = in.width;
  Activation out(out_c, h, w);
  for (int o = 0; o < out_c; ++o) {
    double* dst = out.plane(o);
    std::fill(dst, dst + h * w, bias.values[o]);
    for (int i = 0; i < in_c; ++i) {
      const double* src = in.plane(i);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wt = weight.values[((static_cast<std::size_t>(o) * in_c + i) * k + ky) * k + kx];
          const int dy = ky - pad;
          const int dx = kx - pad;
          const int x_lo = std::max(0, -dx);
          const int x_hi = std::min(w, w - dx);
          for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
            const double* s = src + (y + dy) * w + dx;
            double* d = dst + y * w;
            for (int x = x_lo; x < x_hi; ++x) d[x] += wt * s[x];
          }
        }
      }
    }
  }
  return out;
}

/// Accumulates weight/bias gradients and returns the input gradient.
inline Activation conv_backward(const Activation& in, const Tensor& weight, const Activation& grad_out,
                                Tensor& grad_weight, Tensor& grad_bias) {
  const int out_c = weight.shape[0];
  const int in_c = weight.shape[1];
  const int k = weight.shape[2];
  const int pad = k / 2;
  const int h = in.height;
  const int w = in.width;
  Activation grad_in(in_c, h, w);
  for (int o = 0; o < out_c; ++o) {
    const double* go = grad_out.plane(o);
    double bsum = 0.0;
    for (int j = 0; j < h * w; ++j) bsum += go[j];
    grad_bias.values[o] += bsum;
    for (int i = 0; i < in_c; ++i) {
      const double* src = in.plane(i);
      double* gi = grad_in.plane(i);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const std::size_t widx = ((static_cast<std::size_t>(o) * in_c + i) * k + ky) * k + kx;
          const double wt = weight.values[widx];
          const int dy = ky - pad;
          const int dx = kx - pad;
          const int x_lo = std::max(0, -dx);
          const int x_hi = std::min(w, w - dx);
          double acc = 0.0;
          for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
            const double* s = src + (y + dy) * w + dx;
            double* g = gi + (y + dy) * w + dx;
            const double* gy = go + y * w;
            for (int x = x_lo; x < x_hi; ++x) {
              acc += gy[x] * s[x];
              g[x] += wt * gy[x];
            }
          }
          grad_weight.values[widx] += acc;
        }
      }
    }
  }
  return grad_in;
}

inline Activation relu(const Activation& z) {
  Activation a = z;
  for (double& v : a.v) v = v > 0.0 ? v : 0.0;
  return a;
}

inline Activation relu_backward(const Activation& z, const Activation& grad_out) {
  Activation g = grad_out;
  for (std::size_t i = 0; i < g.v.size(); ++i) {
    if (!(z.v[i] > 0.0)) g.v[i] = 0.0;
  }
  return g;
}

/// 2x2 average pooling with stride 2; partial blocks at odd borders average
/// only their in-bounds cells.
inline Activation avg_pool(const Activation& in) {
  const int h2 = (in.height + 1) / 2;
  const int w2 = (in.width + 1) / 2;
  Activation out(in.channels, h2, w2);
  for (int c = 0; c < in.channels; ++c) {
    const double* s = in.plane(c);
    double* d = out.plane(c);
    for (int y = 0; y < h2; ++y) {
      for (int x = 0; x < w2; ++x) {
        double sum = 0.0;
        int n = 0;
        for (int yy = 2 * y; yy < std::min(2 * y + 2, in.height); ++yy) {
          for (int xx = 2 * x; xx < std::min(2 * x + 2, in.width); ++xx) {
            sum += s[yy * in.width + xx];
            ++n;
          }
        }
        d[y * w2 + x] = sum / n;
      }
    }
  }
  return out;
}

inline Activation avg_pool_backward(const Activation& in_shape, const Activation& grad_out) {
  Activation g(in_shape.channels, in_shape.height, in_shape.width);
  const int h = in_shape.height;
  const int w = in_shape.width;
  for (int c = 0; c < g.channels; ++c) {
    const double* go = grad_out.plane(c);
    double* d = g.plane(c);
    for (int y = 0; y < h; ++y) {
      const int by = y / 2;
      const int ny = std::min(2 * by + 2, h) - 2 * by;
      for (int x = 0; x < w; ++x) {
        const int bx = x / 2;
        const int nx = std::min(2 * bx + 2, w) - 2 * bx;
        d[y * w + x] = go[by * grad_out.width + bx] / (ny * nx);
      }
    }
  }
  return g;
}

struct Lerp {
  int lo;
  int hi;
  double frac;
};

// Half-pixel-centred bilinear sampling of a coarse axis at fine resolution.
inline std::vector<Lerp> upsample_axis(int fine, int coarse) {
  std::vector<Lerp> out(fine);
  for (int i = 0; i < fine; ++i) {
    double u = (i + 0.5) / 2.0 - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(coarse - 1));
    const int lo = static_cast<int>(std::floor(u));
    const int hi = std::min(lo + 1, coarse - 1);
    out[i] = {lo, hi, u - lo};
  }
  return out;
}

inline Activation upsample(const Activation& in, int height, int width) {
  const auto ys = upsample_axis(height, in.height);
  const auto xs = upsample_axis(width, in.width);
  Activation out(in.channels, height, width);
  for (int c = 0; c < in.channels; ++c) {
    const double* s = in.plane(c);
    double* d = out.plane(c);
    for (int y = 0; y < height; ++y) {
      const auto& ly = ys[y];
      for (int x = 0; x < width; ++x) {
        const auto& lx = xs[x];
        const double top = (1 - lx.frac) * s[ly.lo * in.width + lx.lo] + lx.frac * s[ly.lo * in.width + lx.hi];
        const double bot = (1 - lx.frac) * s[ly.hi * in.width + lx.lo] + lx.frac * s[ly.hi * in.width + lx.hi];
        d[y * width + x] = (1 - ly.frac) * top + ly.frac * bot;
      }
    }
  }
  return out;
}

inline Activation upsample_backward(const Activation& coarse_shape, const Activation& grad_out) {
  const auto ys = upsample_axis(grad_out.height, coarse_shape.height);
  const auto xs = upsample_axis(grad_out.width, coarse_shape.width);
  Activation g(coarse_shape.channels, coarse_shape.height, coarse_shape.width);
  const int cw = coarse_shape.width;
  for (int c = 0; c < g.channels; ++c) {
    const double* go = grad_out.plane(c);
    double* d = g.plane(c);
    for (int y = 0; y < grad_out.height; ++y) {
      const auto& ly = ys[y];
      for (int x = 0; x < grad_out.width; ++x) {
        const auto& lx = xs[x];
        const double v = go[y * grad_out.width + x];
        d[ly.lo * cw + lx.lo] += (1 - ly.frac) * (1 - lx.frac) * v;
        d[ly.lo * cw + lx.hi] += (1 - ly.frac) * lx.frac * v;
        d[ly.hi * cw + lx.lo] += ly.frac * (1 - lx.frac) * v;
        d[ly.hi * cw + lx.hi] += ly.frac * lx.frac * v;
      }
    }
  }
  return g;
}

inline Activation concat(const Activation& a, const Activation& b) {
  Activation out(a.channels + b.channels, a.height, a.width);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return out;
}

inline Activation from_features(const FeatureGrid& grid) {
  Activation a(grid.num_channels(), grid.height(), grid.width());
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] = static_cast<double>(grid.values()[i]);
  return a;
}

// Forward pass intermediates kept for the backward sweep.
struct MsfcnTape {
  Activation x, z0, a0, z1, a1, zs0, s0, zs1, s1, pooled, zt0, t0, zt1, t1, up, cat, zq, q, out;
};

inline MsfcnTape msfcn_forward(const FeatureGrid& grid, const RewardParams& p) {
  const auto& T = p.tensors;
  MsfcnTape t;
  t.x = from_features(grid);
  t.z0 = conv_forward(t.x, T[0], T[1]);
  t.a0 = relu(t.z0);
  t.z1 = conv_forward(t.a0, T[2], T[3]);
  t.a1 = relu(t.z1);
  t.zs0 = conv_forward(t.a1, T[4], T[5]);
  t.s0 = relu(t.zs0);
  t.zs1 = conv_forward(t.s0, T[6], T[7]);
  t.s1 = relu(t.zs1);
  t.pooled = avg_pool(t.a1);
  t.zt0 = conv_forward(t.pooled, T[8], T[9]);
  t.t0 = relu(t.zt0);
  t.zt1 = conv_forward(t.t0, T[10], T[11]);
  t.t1 = relu(t.zt1);
  t.up = upsample(t.t1, grid.height(), grid.width());
  t.cat = concat(t.up, t.s1);
  t.zq = conv_forward(t.cat, T[12], T[13]);
  t.q = relu(t.zq);
  t.out = conv_forward(t.q, T[14], T[15]);
  return t;
}

}  // namespace nn

inline void check_compatible(const FeatureGrid& grid, const RewardParams& params) {
  if (grid.num_channels() != params.config.in_channels) {
    throw ValidationError("feature grid has " + std::to_string(grid.num_channels()) +
                          " channels but the reward head expects " + std::to_string(params.config.in_channels));
  }
  require(params.parameter_count() == analytic_parameter_count(params.config),
          "reward parameters do not match their head configuration");
}

inline RewardField forward(const FeatureGrid& grid, const RewardParams& params) {
  check_compatible(grid, params);
  const int h = grid.height();
  const int w = grid.width();
  RewardField out(h, w, 0.0);
  if (params.config.kind == HeadKind::linear) {
    const auto& weight = params.tensors[0].values;
    const double bias = params.tensors[1].values[0];
    for (int i = 0; i < h * w; ++i) out.data()[i] = bias;
    for (int c = 0; c < grid.num_channels(); ++c) {
      const float* f = grid.values().data() + static_cast<std::size_t>(c) * h * w;
      for (int i = 0; i < h * w; ++i) out.data()[i] += weight[c] * static_cast<double>(f[i]);
    }
    return out;
  }
  const auto tape = nn::msfcn_forward(grid, params);
  std::copy(tape.out.v.begin(), tape.out.v.end(), out.data().begin());
  return out;
}

/// Gradient of sum_s upstream(s) * r(s) with respect to every parameter.
inline ParamGrads backward(const FeatureGrid& grid, const RewardParams& params, const Grid<double>& upstream) {
  check_compatible(grid, params);
  require(upstream.height() == grid.height() && upstream.width() == grid.width(),
          "upstream gradient dimensions do not match the feature grid");
  for (double v : upstream.data()) require(std::isfinite(v), "upstream gradient contains a non-finite value");

  ParamGrads g = zero_grads_like(params);
  const int h = grid.height();
  const int w = grid.width();
  if (params.config.kind == HeadKind::linear) {
    double bsum = 0.0;
    for (double u : upstream.data()) bsum += u;
    g[1].values[0] = bsum;
    for (int c = 0; c < grid.num_channels(); ++c) {
      const float* f = grid.values().data() + static_cast<std::size_t>(c) * h * w;
      double acc = 0.0;
      for (int i = 0; i < h * w; ++i) acc += upstream.data()[i] * static_cast<double>(f[i]);
      g[0].values[c] = acc;
    }
    return g;
  }

  using namespace nn;
  const auto& T = params.tensors;
  const auto t = msfcn_forward(grid, params);
  Activation d_out(1, h, w);
  std::copy(upstream.data().begin(), upstream.data().end(), d_out.v.begin());

  Activation d_q = conv_backward(t.q, T[14], d_out, g[14], g[15]);
  Activation d_zq = relu_backward(t.zq, d_q);
  Activation d_cat = conv_backward(t.cat, T[12], d_zq, g[12], g[13]);

  Activation d_up(t.up.channels, h, w);
  Activation d_s1(t.s1.channels, h, w);
  std::copy(d_cat.v.begin(), d_cat.v.begin() + static_cast<std::ptrdiff_t>(d_up.v.size()), d_up.v.begin());
  std::copy(d_cat.v.begin() + static_cast<std::ptrdiff_t>(d_up.v.size()), d_cat.v.end(), d_s1.v.begin());

  // Trunk (coarse) branch.
  Activation d_t1 = upsample_backward(t.t1, d_up);
  Activation d_zt1 = relu_backward(t.zt1, d_t1);
  Activation d_t0 = conv_backward(t.t0, T[10], d_zt1, g[10], g[11]);
  Activation d_zt0 = relu_backward(t.zt0, d_t0);
  Activation d_pooled = conv_backward(t.pooled, T[8], d_zt0, g[8], g[9]);
  Activation d_a1 = avg_pool_backward(t.a1, d_pooled);

  // Skip (full resolution) branch.
  Activation d_zs1 = relu_backward(t.zs1, d_s1);
  Activation d_s0 = conv_backward(t.s0, T[6], d_zs1, g[6], g[7]);
  Activation d_zs0 = relu_backward(t.zs0, d_s0);
  Activation d_a1_skip = conv_backward(t.a1, T[4], d_zs0, g[4], g[5]);
  for (std::size_t i = 0; i < d_a1.v.size(); ++i) d_a1.v[i] += d_a1_skip.v[i];

  Activation d_z1 = relu_backward(t.z1, d_a1);
  Activation d_a0 = conv_backward(t.a0, T[2], d_z1, g[2], g[3]);
  Activation d_z0 = relu_backward(t.z0, d_a0);
  conv_backward(t.x, T[0], d_z0, g[0], g[1]);
  return g;
}

struct PenaltyResult {
  double value = 0.0;
  Grid<double> grad;
};

/// Mean squared difference over 4-neighbour cell pairs.
inline PenaltyResult smoothness_penalty(const RewardField& field) {
  const int h = field.height();
  const int w = field.width();
  PenaltyResult out{0.0, Grid<double>(h, w, 0.0)};
  const long pairs = static_cast<long>(h) * (w - 1) + static_cast<long>(h - 1) * w;
  if (pairs <= 0) return out;
  const double scale = 1.0 / static_cast<double>(pairs);
  auto visit = [&](int r0, int c0, int r1, int c1) {
    const double d = field(r0, c0) - field(r1, c1);
    out.value += d * d;
    out.grad(r0, c0) += 2.0 * d * scale;
    out.grad(r1, c1) -= 2.0 * d * scale;
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (c + 1 < w) visit(r, c, r, c + 1);
      if (r + 1 < h) visit(r, c, r + 1, c);
    }
  }
  out.value *= scale;
  return out;
}

/// Mean squared reward; keeps the reward from collapsing to an arbitrary scale.
inline PenaltyResult magnitude_regularizer(const RewardField& field) {
  PenaltyResult out{0.0, Grid<double>(field.height(), field.width(), 0.0)};
  const double n = static_cast<double>(field.size());
  if (n == 0) return out;
  for (std::size_t i = 0; i < field.size(); ++i) {
    const double r = field.data()[i];
    out.value += r * r;
    out.grad.data()[i] = 2.0 * r / n;
  }
  out.value /= n;
  return out;
}

}  // namespace cfirl
