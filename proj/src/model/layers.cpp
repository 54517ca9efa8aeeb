#include "mait/model/layers.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

#include "mait/num/ops.hpp"

namespace mait::model {

namespace ops = mait::num;
using num::GradSink;
using num::NumericError;
using num::OpKind;
using num::ShapeError;

DiffArray gained_rms_norm(const DiffArray& x, const DiffArray& gain) {
  return ops::mul(ops::rms_norm(x), ops::broadcast_rows(gain, x.rows()));
}

DiffArray attention_mix(const AttentionLayerParams& p, const DiffArray& x) {
  const DiffArray q = ops::matmul(x, p.wq);
  const DiffArray k = ops::matmul(x, p.wk);
  const DiffArray v = ops::matmul(x, p.wv);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(p.d_k));
  std::vector<DiffArray> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t lo = h * p.d_k, hi = lo + p.d_k;
    auto qh = ops::slice(q, 1, lo, hi);
    auto kh = ops::slice(k, 1, lo, hi);
    auto vh = ops::slice(v, 1, lo, hi);
    auto weights = ops::softmax_lastdim(ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt_dk));
    heads.push_back(ops::matmul(weights, vh));
  }
  auto merged = heads.size() == 1 ? heads.front() : ops::concat(heads, 1);
  return ops::matmul(merged, p.wz);
}

std::pair<DiffArray, DiffArray> discretize(const DiffArray& a, const DiffArray& b,
                                           const DiffArray& delta) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("discretize: A {} and B {} differ", num::shape_string(a.shape()),
                                 num::shape_string(b.shape())));
  }
  for (double d : delta.values()) {
    if (!(d > 0.0)) throw std::invalid_argument(fmt::format("discretize: step {} is not positive", d));
  }
  auto z = ops::mul(delta, a);
  auto a_bar = ops::exp(z);
  auto b_bar = ops::mul(ops::mul(delta, b), ops::exprel(z));
  return {a_bar, b_bar};
}

std::pair<double, double> discretize(double a, double b, double delta) {
  auto [ab, bb] = discretize(DiffArray::scalar(a), DiffArray::scalar(b), DiffArray::scalar(delta));
  return {ab.item(), bb.item()};
}

std::pair<DiffArray, DiffArray> discretize_diagonal_matrix(const DiffArray& a, const DiffArray& b,
                                                           double delta) {
  if (a.rank() != 2 || a.shape()[0] != a.shape()[1]) throw ShapeError("discretize: A must be square");
  const std::size_t n = a.shape()[0];
  if (b.size() != n) throw ShapeError("discretize: B must have one entry per state");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && a.at(i, j) != 0.0) throw std::invalid_argument("discretize: A is not diagonal");
  std::vector<double> diag(n), bv(b.values().begin(), b.values().end());
  for (std::size_t i = 0; i < n; ++i) diag[i] = a.at(i, i);
  auto [ad, bd] = discretize(DiffArray::constant({1, n}, diag), DiffArray::constant({1, n}, bv),
                             DiffArray::scalar(delta));
  std::vector<double> dense(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) dense[i * n + i] = ad[i];
  return {DiffArray::constant({n, n}, dense),
          DiffArray::constant({n, 1}, std::vector<double>(bd.values().begin(), bd.values().end()))};
}

namespace {

struct ScanDims {
  std::size_t t, c, s;
  bool a_shared, b_shared;
};

ScanDims check_scan_inputs(const char* op, const DiffArray& x, const DiffArray& a_bar,
                           const DiffArray& b_bar, const DiffArray& c) {
  if (x.rank() != 2 || c.rank() != 2) throw ShapeError(fmt::format("{}: x and C must be rank 2", op));
  ScanDims d{x.shape()[0], x.shape()[1], c.shape()[1], false, false};
  if (c.shape()[0] != d.c) {
    throw ShapeError(fmt::format("{}: C {} does not match {} channels", op,
                                 num::shape_string(c.shape()), d.c));
  }
  auto check = [&](const DiffArray& m, const char* name, bool& shared) {
    if (m.rank() != 2 || m.shape()[1] != d.c * d.s || (m.shape()[0] != 1 && m.shape()[0] != d.t)) {
      throw ShapeError(fmt::format("{}: {} has shape {}, expected {}x{} or 1x{}", op, name,
                                   num::shape_string(m.shape()), d.t, d.c * d.s, d.c * d.s));
    }
    shared = m.shape()[0] == 1;
  };
  check(a_bar, "A_bar", d.a_shared);
  check(b_bar, "B_bar", d.b_shared);
  return d;
}

}  // namespace

DiffArray ssm_scan(const DiffArray& x, const DiffArray& a_bar, const DiffArray& b_bar,
                   const DiffArray& c) {
  const ScanDims d = check_scan_inputs("ssm_scan", x, a_bar, b_bar, c);
  const std::size_t cs = d.c * d.s;
  auto xv = x.values();
  auto av = a_bar.values();
  auto bv = b_bar.values();
  auto cv = c.values();

  std::vector<double> states(d.t * cs);  // h_t for every step, kept for backward
  std::vector<double> y(d.t * d.c, 0.0);
  std::vector<double> h(cs, 0.0);
  for (std::size_t t = 0; t < d.t; ++t) {
    const double* at = &av[d.a_shared ? 0 : t * cs];
    const double* bt = &bv[d.b_shared ? 0 : t * cs];
    for (std::size_t ch = 0; ch < d.c; ++ch) {
      const double xin = xv[t * d.c + ch];
      double acc = 0.0;
      for (std::size_t s = 0; s < d.s; ++s) {
        const std::size_t i = ch * d.s + s;
        h[i] = at[i] * h[i] + bt[i] * xin;
        if (!std::isfinite(h[i])) throw NumericError(fmt::format("ssm_scan: non-finite state at step {}", t));
        acc += cv[i] * h[i];
      }
      y[t * d.c + ch] = acc;
    }
    std::copy(h.begin(), h.end(), states.begin() + static_cast<std::ptrdiff_t>(t * cs));
  }

  return num::make_result(
      OpKind::custom, "ssm_scan", {x, a_bar, b_bar, c}, {d.t, d.c}, std::move(y),
      [d, states = std::move(states)](std::span<const double>, std::span<const double> gy, GradSink& sink) {
        const std::size_t cs = d.c * d.s;
        auto xv = sink.input_value(0);
        auto av = sink.input_value(1);
        auto bv = sink.input_value(2);
        auto cv = sink.input_value(3);
        std::vector<double> gx(d.t * d.c, 0.0);
        std::vector<double> ga((d.a_shared ? 1 : d.t) * cs, 0.0);
        std::vector<double> gb((d.b_shared ? 1 : d.t) * cs, 0.0);
        std::vector<double> gc(cs, 0.0);
        std::vector<double> carry(cs, 0.0);
        for (std::size_t t = d.t; t-- > 0;) {
          const double* at = &av[d.a_shared ? 0 : t * cs];
          const double* bt = &bv[d.b_shared ? 0 : t * cs];
          double* gat = &ga[d.a_shared ? 0 : t * cs];
          double* gbt = &gb[d.b_shared ? 0 : t * cs];
          const double* ht = &states[t * cs];
          for (std::size_t ch = 0; ch < d.c; ++ch) {
            const double g = gy[t * d.c + ch];
            const double xin = xv[t * d.c + ch];
            double gxin = 0.0;
            for (std::size_t s = 0; s < d.s; ++s) {
              const std::size_t i = ch * d.s + s;
              const double gh = cv[i] * g + carry[i];
              const double hprev = t > 0 ? states[(t - 1) * cs + i] : 0.0;
              gc[i] += g * ht[i];
              gat[i] += gh * hprev;
              gbt[i] += gh * xin;
              gxin += gh * bt[i];
              carry[i] = at[i] * gh;
            }
            gx[t * d.c + ch] = gxin;
          }
        }
        sink.accumulate(0, gx);
        sink.accumulate(1, ga);
        sink.accumulate(2, gb);
        sink.accumulate(3, gc);
      });
}

DiffArray ssm_conv(const DiffArray& x, const DiffArray& a_bar, const DiffArray& b_bar,
                   const DiffArray& c) {
  const ScanDims d = check_scan_inputs("ssm_conv", x, a_bar, b_bar, c);
  if (!d.a_shared || !d.b_shared) {
    throw std::invalid_argument("ssm_conv: kernel form undefined for input-dependent delta");
  }
  const std::size_t cs = d.c * d.s;
  auto xv = x.values();
  auto av = a_bar.values();
  auto bv = b_bar.values();
  auto cv = c.values();

  // kernel[k * C + ch] = sum_s C A_bar^k B_bar
  std::vector<double> kernel(d.t * d.c, 0.0);
  std::vector<double> power(cs, 1.0);
  for (std::size_t k = 0; k < d.t; ++k) {
    for (std::size_t ch = 0; ch < d.c; ++ch) {
      double acc = 0.0;
      for (std::size_t s = 0; s < d.s; ++s) {
        const std::size_t i = ch * d.s + s;
        acc += cv[i] * power[i] * bv[i];
      }
      kernel[k * d.c + ch] = acc;
    }
    for (std::size_t i = 0; i < cs; ++i) power[i] *= av[i];
  }
  std::vector<double> y(d.t * d.c, 0.0);
  for (std::size_t t = 0; t < d.t; ++t)
    for (std::size_t k = 0; k <= t; ++k)
      for (std::size_t ch = 0; ch < d.c; ++ch) y[t * d.c + ch] += kernel[k * d.c + ch] * xv[(t - k) * d.c + ch];

  return num::make_result(
      OpKind::custom, "ssm_conv", {x, a_bar, b_bar, c}, {d.t, d.c}, std::move(y),
      [d, kernel = std::move(kernel)](std::span<const double>, std::span<const double> gy, GradSink& sink) {
        const std::size_t cs = d.c * d.s;
        auto xv = sink.input_value(0);
        auto av = sink.input_value(1);
        auto bv = sink.input_value(2);
        auto cv = sink.input_value(3);
        std::vector<double> gx(d.t * d.c, 0.0);
        std::vector<double> gk(d.t * d.c, 0.0);
        for (std::size_t t = 0; t < d.t; ++t)
          for (std::size_t k = 0; k <= t; ++k)
            for (std::size_t ch = 0; ch < d.c; ++ch) {
              const double g = gy[t * d.c + ch];
              gk[k * d.c + ch] += g * xv[(t - k) * d.c + ch];
              gx[(t - k) * d.c + ch] += g * kernel[k * d.c + ch];
            }
        std::vector<double> ga(cs, 0.0), gb(cs, 0.0), gc(cs, 0.0);
        std::vector<double> power(cs, 1.0), prev_power(cs, 0.0);  // a^k and a^(k-1)
        for (std::size_t k = 0; k < d.t; ++k) {
          for (std::size_t ch = 0; ch < d.c; ++ch) {
            const double g = gk[k * d.c + ch];
            for (std::size_t s = 0; s < d.s; ++s) {
              const std::size_t i = ch * d.s + s;
              gc[i] += g * power[i] * bv[i];
              gb[i] += g * cv[i] * power[i];
              if (k > 0) ga[i] += g * cv[i] * static_cast<double>(k) * prev_power[i] * bv[i];
            }
          }
          for (std::size_t i = 0; i < cs; ++i) {
            prev_power[i] = power[i];
            power[i] *= av[i];
          }
        }
        sink.accumulate(0, gx);
        sink.accumulate(1, ga);
        sink.accumulate(2, gb);
        sink.accumulate(3, gc);
      });
}

SsmDiscretization discretize_layer(const MambaLayerParams& p, const DiffArray& x) {
  const std::size_t t = x.rows();
  const std::size_t c = p.a_raw.shape()[0];
  const std::size_t s = p.a_raw.shape()[1];
  if (x.cols() != c) {
    throw ShapeError(fmt::format("ssm: input has {} channels, layer expects {}", x.cols(), c));
  }
  auto a_flat = ops::reshape(ops::scale(ops::softplus(p.a_raw), -1.0), {1, c * s});
  auto b_flat = ops::reshape(p.b, {1, c * s});
  if (p.mode == SsmMode::lti) {
    auto delta = ops::softplus(p.delta_raw);
    auto [a_bar, b_bar] = discretize(a_flat, b_flat, delta);
    return {a_bar, b_bar, delta};
  }
  auto delta = ops::softplus(ops::add(ops::matmul(x, p.delta_proj), ops::broadcast_rows(p.delta_bias, t)));
  // Expand each channel's step across its S states.
  std::vector<double> expand(c * c * s, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t k = 0; k < s; ++k) expand[ch * (c * s) + ch * s + k] = 1.0;
  auto delta_states = ops::matmul(delta, DiffArray::constant({c, c * s}, std::move(expand)));
  auto [a_bar, b_bar] = discretize(ops::broadcast_rows(a_flat, t), ops::broadcast_rows(b_flat, t), delta_states);
  return {a_bar, b_bar, delta};
}

DiffArray ssm_scan(const DiffArray& x, const MambaLayerParams& p) {
  auto disc = discretize_layer(p, x);
  return ssm_scan(x, disc.a_bar, disc.b_bar, p.c);
}

DiffArray ssm_conv(const DiffArray& x, const MambaLayerParams& p) {
  if (p.mode != SsmMode::lti) {
    throw std::invalid_argument("ssm_conv: kernel form undefined for input-dependent delta");
  }
  auto disc = discretize_layer(p, x);
  return ssm_conv(x, disc.a_bar, disc.b_bar, p.c);
}

DiffArray mamba_mix(const MambaLayerParams& p, const DiffArray& x, SsmPath path) {
  auto u = ops::matmul(x, p.in_proj);
  auto y = path == SsmPath::scan ? ssm_scan(u, p) : ssm_conv(u, p);
  return ops::matmul(y, p.out_proj);
}

DiffArray encoder_block(const EncoderLayer& layer, const DiffArray& h, SsmPath path) {
  const std::size_t n = h.rows();
  const auto& sub = layer.sub;
  auto normed = gained_rms_norm(h, sub.mix_norm);
  auto mixed = layer.kind == LayerKind::attention ? attention_mix(layer.attention, normed)
                                                  : mamba_mix(layer.mamba, normed, path);
  auto h1 = ops::add(h, mixed);
  auto v = gained_rms_norm(h1, sub.mlp_norm);
  auto hidden = ops::tanh(ops::add(ops::matmul(v, sub.w1), ops::broadcast_rows(sub.b1, n)));
  auto out = ops::add(ops::matmul(hidden, sub.w2), ops::broadcast_rows(sub.b2, n));
  return ops::add(h1, out);
}

DiffArray attention_layer(const EncoderLayer& layer, const DiffArray& h) {
  if (layer.kind != LayerKind::attention) throw std::invalid_argument("attention_layer: not an attention layer");
  return encoder_block(layer, h);
}

DiffArray mamba_layer(const EncoderLayer& layer, const DiffArray& h, SsmPath path) {
  if (layer.kind != LayerKind::mamba) throw std::invalid_argument("mamba_layer: not a Mamba layer");
  return encoder_block(layer, h, path);
}

}  // namespace mait::model
