#include "salmod/layers.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace salmod {

namespace {

// Fixed-order dot product with eight interleaved partial sums. The order is
// part of the contract: results are reproducible bit-for-bit on any target.
Real dot(const Real* a, const Real* b, std::size_t n) {
  Real lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
  }
  for (std::size_t l = 0; i < n; ++i, ++l) lanes[l] += a[i] * b[i];
  return ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) +
         ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
}

void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void require_rank(Var v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(v.shape()));
  }
}

struct ConvDims {
  std::size_t in_c, in_h, in_w;
  std::size_t out_c, kh, kw;
  std::size_t out_h, out_w;
  std::size_t stride, pad;

  std::size_t patch() const { return in_c * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

// Unfolds zero-padded input patches into a [patch, pixels] matrix.
std::vector<Real> im2col(const Real* in, const ConvDims& d) {
  std::vector<Real> col(d.patch() * d.pixels(), Real{0});
  for (std::size_t c = 0; c < d.in_c; ++c) {
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        Real* row = col.data() + ((c * d.kh + ky) * d.kw + kx) * d.pixels();
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const long iy = static_cast<long>(oy * d.stride + ky) - static_cast<long>(d.pad);
          if (iy < 0 || iy >= static_cast<long>(d.in_h)) continue;
          const Real* src = in + (c * d.in_h + static_cast<std::size_t>(iy)) * d.in_w;
          Real* dst = row + oy * d.out_w;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) {
            const long ix = static_cast<long>(ox * d.stride + kx) - static_cast<long>(d.pad);
            if (ix >= 0 && ix < static_cast<long>(d.in_w)) dst[ox] = src[ix];
          }
        }
      }
    }
  }
  return col;
}

void col2im_add(const Real* col, const ConvDims& d, Real* in_grad) {
  for (std::size_t c = 0; c < d.in_c; ++c) {
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const Real* row = col + ((c * d.kh + ky) * d.kw + kx) * d.pixels();
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const long iy = static_cast<long>(oy * d.stride + ky) - static_cast<long>(d.pad);
          if (iy < 0 || iy >= static_cast<long>(d.in_h)) continue;
          Real* dst = in_grad + (c * d.in_h + static_cast<std::size_t>(iy)) * d.in_w;
          const Real* src = row + oy * d.out_w;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) {
            const long ix = static_cast<long>(ox * d.stride + kx) - static_cast<long>(d.pad);
            if (ix >= 0 && ix < static_cast<long>(d.in_w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  if (stride == 0) throw ShapeError("stride must be positive");
  if (input + 2 * padding < kernel) {
    throw ShapeError("window of " + std::to_string(kernel) + " exceeds padded input of " +
                     std::to_string(input + 2 * padding));
  }
  return (input + 2 * padding - kernel) / stride + 1;
}

Var conv2d(Var input, Var weight, Var bias, ConvGeometry geometry) {
  require_rank(input, 3, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  require_rank(bias, 1, "conv2d bias");
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws[1] != is[0]) {
    throw ShapeError("conv2d: input has " + std::to_string(is[0]) + " channels, kernel expects " +
                     std::to_string(ws[1]));
  }
  if (bias.shape()[0] != ws[0]) throw ShapeError("conv2d: bias length does not match filters");

  ConvDims d{};
  d.in_c = is[0];
  d.in_h = is[1];
  d.in_w = is[2];
  d.out_c = ws[0];
  d.kh = ws[2];
  d.kw = ws[3];
  d.stride = geometry.stride;
  d.pad = geometry.padding;
  d.out_h = conv_output_size(d.in_h, d.kh, d.stride, d.pad);
  d.out_w = conv_output_size(d.in_w, d.kw, d.stride, d.pad);

  auto col = std::make_shared<const std::vector<Real>>(im2col(input.value().data(), d));
  const Real* w = weight.value().data();
  const Real* b = bias.value().data();
  const std::size_t K = d.patch();
  const std::size_t P = d.pixels();

  Tensor out({d.out_c, d.out_h, d.out_w}, Real{0});
  Real* o = out.data();
  std::size_t co = 0;
  // Four filters per pass share each unfolded row.
  for (; co + 4 <= d.out_c; co += 4) {
    Real* o0 = o + co * P;
    Real* o1 = o0 + P;
    Real* o2 = o1 + P;
    Real* o3 = o2 + P;
    std::fill(o0, o0 + P, b[co]);
    std::fill(o1, o1 + P, b[co + 1]);
    std::fill(o2, o2 + P, b[co + 2]);
    std::fill(o3, o3 + P, b[co + 3]);
    for (std::size_t k = 0; k < K; ++k) {
      const Real w0 = w[co * K + k], w1 = w[(co + 1) * K + k];
      const Real w2 = w[(co + 2) * K + k], w3 = w[(co + 3) * K + k];
      const Real* c = col->data() + k * P;
      for (std::size_t j = 0; j < P; ++j) {
        const Real x = c[j];
        o0[j] += w0 * x;
        o1[j] += w1 * x;
        o2[j] += w2 * x;
        o3[j] += w3 * x;
      }
    }
  }
  for (; co < d.out_c; ++co) {
    Real* oc = o + co * P;
    std::fill(oc, oc + P, b[co]);
    for (std::size_t k = 0; k < K; ++k) axpy(w[co * K + k], col->data() + k * P, oc, P);
  }

  return input.tape->record(
      std::move(out), {input.id, weight.id, bias.id},
      [d, col, in = input.id, wt = weight.id, bs = bias.id](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const std::size_t K = d.patch();
        const std::size_t P = d.pixels();
        if (t.requires_grad(bs)) {
          Tensor& gb = t.accumulator(bs);
          for (std::size_t co = 0; co < d.out_c; ++co) {
            Real s = 0;
            for (std::size_t j = 0; j < P; ++j) s += g[co * P + j];
            gb[co] += s;
          }
        }
        if (t.requires_grad(wt)) {
          Tensor& gw = t.accumulator(wt);
          for (std::size_t co = 0; co < d.out_c; ++co) {
            const Real* gr = g.data() + co * P;
            for (std::size_t k = 0; k < K; ++k) gw[co * K + k] += dot(gr, col->data() + k * P, P);
          }
        }
        if (t.requires_grad(in)) {
          const Real* w = t.value(wt).data();
          std::vector<Real> dcol(K * P, Real{0});
          for (std::size_t co = 0; co < d.out_c; ++co) {
            const Real* gr = g.data() + co * P;
            for (std::size_t k = 0; k < K; ++k) axpy(w[co * K + k], gr, dcol.data() + k * P, P);
          }
          col2im_add(dcol.data(), d, t.accumulator(in).data());
        }
      });
}

Var maxpool2d(Var input, std::size_t window, std::size_t stride) {
  require_rank(input, 3, "maxpool2d");
  const Shape& s = input.shape();
  if (window == 0) throw ShapeError("maxpool2d: window must be positive");
  if (window > s[1] || window > s[2]) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " larger than input " +
                     shape_string(s));
  }
  const std::size_t C = s[0], H = s[1], W = s[2];
  const std::size_t oh = conv_output_size(H, window, stride, 0);
  const std::size_t ow = conv_output_size(W, window, stride, 0);
  Tensor out({C, oh, ow}, Real{0});
  auto argmax = std::make_shared<std::vector<std::size_t>>(C * oh * ow);
  const Real* x = input.value().data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (c * H + oy * stride) * W + ox * stride;
        for (std::size_t wy = 0; wy < window; ++wy) {
          for (std::size_t wx = 0; wx < window; ++wx) {
            const std::size_t idx = (c * H + oy * stride + wy) * W + ox * stride + wx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (c * oh + oy) * ow + ox;
        out[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }
  return input.tape->record(std::move(out), {input.id},
                            [argmax, in = input.id](Tape& t, std::size_t self) {
                              if (!t.requires_grad(in)) return;
                              const Tensor& g = t.grad(self);
                              Tensor& acc = t.accumulator(in);
                              for (std::size_t o = 0; o < g.size(); ++o) acc[(*argmax)[o]] += g[o];
                            });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (Real& v : out.values()) v = v > 0 ? v : Real{0};
  return x.tape->record(std::move(out), {x.id}, [in = x.id](Tape& t, std::size_t self) {
    if (!t.requires_grad(in)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& acc = t.accumulator(in);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += y[i] > 0 ? g[i] : Real{0};
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (Real& v : out.values()) v = Real{1} / (Real{1} + std::exp(-v));
  return x.tape->record(std::move(out), {x.id}, [in = x.id](Tape& t, std::size_t self) {
    if (!t.requires_grad(in)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& acc = t.accumulator(in);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * y[i] * (Real{1} - y[i]);
  });
}

Var fully_connected(Var x, Var weight, Var bias) {
  require_rank(weight, 2, "fully_connected weight");
  require_rank(bias, 1, "fully_connected bias");
  const std::size_t out_n = weight.shape()[0];
  const std::size_t in_n = weight.shape()[1];
  if (x.value().size() != in_n) {
    throw ShapeError("fully_connected: input of " + std::to_string(x.value().size()) +
                     " values, weight expects " + std::to_string(in_n));
  }
  if (bias.shape()[0] != out_n) throw ShapeError("fully_connected: bias length mismatch");
  const Real* xv = x.value().data();
  const Real* w = weight.value().data();
  const Real* b = bias.value().data();
  Tensor out({out_n}, Real{0});
  for (std::size_t o = 0; o < out_n; ++o) out[o] = b[o] + dot(w + o * in_n, xv, in_n);
  return x.tape->record(
      std::move(out), {x.id, weight.id, bias.id},
      [in = x.id, wt = weight.id, bs = bias.id, out_n, in_n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(bs)) {
          Tensor& gb = t.accumulator(bs);
          for (std::size_t o = 0; o < out_n; ++o) gb[o] += g[o];
        }
        if (t.requires_grad(wt)) {
          const Real* xv = t.value(in).data();
          Real* gw = t.accumulator(wt).data();
          for (std::size_t o = 0; o < out_n; ++o) axpy(g[o], xv, gw + o * in_n, in_n);
        }
        if (t.requires_grad(in)) {
          const Real* w = t.value(wt).data();
          Real* gx = t.accumulator(in).data();
          for (std::size_t o = 0; o < out_n; ++o) axpy(g[o], w + o * in_n, gx, in_n);
        }
      });
}

Var softmax_cross_entropy(Var logits, std::size_t label) {
  const Tensor& z = logits.value();
  const std::size_t n = z.size();
  if (label >= n) {
    throw std::out_of_range("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(n) + ")");
  }
  Real peak = z[0];
  for (std::size_t i = 1; i < n; ++i) peak = std::max(peak, z[i]);
  auto prob = std::make_shared<std::vector<Real>>(n);
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*prob)[i] = std::exp(z[i] - peak);
    total += (*prob)[i];
  }
  for (Real& p : *prob) p /= total;
  const Real loss = std::log(total) - (z[label] - peak);
  return logits.tape->record(Tensor({1}, loss), {logits.id},
                             [prob, label, in = logits.id](Tape& t, std::size_t self) {
                               if (!t.requires_grad(in)) return;
                               const Real g = t.grad(self)[0];
                               Tensor& acc = t.accumulator(in);
                               for (std::size_t i = 0; i < prob->size(); ++i) {
                                 const Real target = i == label ? Real{1} : Real{0};
                                 acc[i] += g * ((*prob)[i] - target);
                               }
                             });
}

Var modulate(Var features, Var modulation, bool skip) {
  require_rank(features, 3, "modulate features");
  require_rank(modulation, 3, "modulate map");
  const Shape& fs = features.shape();
  const Shape& ms = modulation.shape();
  if (ms[0] != 1 || ms[1] != fs[1] || ms[2] != fs[2]) {
    throw ShapeError("modulate: map " + shape_string(ms) + " does not fit features " +
                     shape_string(fs));
  }
  const std::size_t C = fs[0];
  const std::size_t P = fs[1] * fs[2];
  const Real* m = modulation.value().data();
#ifndef NDEBUG
  for (std::size_t j = 0; j < P; ++j) assert(m[j] >= 0 && m[j] <= 1);
#endif
  const Real offset = skip ? Real{1} : Real{0};
  std::vector<Real> factor(P);
  for (std::size_t j = 0; j < P; ++j) factor[j] = m[j] + offset;

  Tensor out = features.value();
  for (std::size_t c = 0; c < C; ++c) {
    Real* row = out.data() + c * P;
    for (std::size_t j = 0; j < P; ++j) row[j] *= factor[j];
  }
  return features.tape->record(
      std::move(out), {features.id, modulation.id},
      [f = features.id, mod = modulation.id, offset, C, P](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(f)) {
          const Real* m = t.value(mod).data();
          Real* acc = t.accumulator(f).data();
          for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t j = 0; j < P; ++j) acc[c * P + j] += g[c * P + j] * (m[j] + offset);
          }
        }
        if (t.requires_grad(mod)) {
          const Real* fv = t.value(f).data();
          Real* acc = t.accumulator(mod).data();
          for (std::size_t j = 0; j < P; ++j) {
            Real s = 0;
            for (std::size_t c = 0; c < C; ++c) s += g[c * P + j] * fv[c * P + j];
            acc[j] += s;
          }
        }
      });
}

}  // namespace salmod
