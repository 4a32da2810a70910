#include "osmid/ad/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace osmid::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_same_tape(Var a, Var b) {
  require(a.tape == b.tape, "ad: vars from different tapes");
}

Tensor unary_like(const Tensor& x) { return Tensor::zeros(x.shape); }

// im2col for channel-last input. cols is [Ho*Wo, kh*kw*Cin].
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, Tensor& cols) {
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  const int k = kh * kw * c;
  cols = Tensor({ho * wo, k});
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      double* row = &cols.data[(static_cast<size_t>(oy) * wo + ox) * k];
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          double* dst = row + (ky * kw + kx) * c;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
            std::fill(dst, dst + c, 0.0);
          } else {
            const double* src = &x.data[(static_cast<size_t>(iy) * w + ix) * c];
            std::copy(src, src + c, dst);
          }
        }
      }
    }
  }
}

// Scatter-add of column gradients back into the input layout.
void col2im_add(const Tensor& dcols, int h, int w, int c, int kh, int kw,
                int stride, int pad, Tensor& dx) {
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  const int k = kh * kw * c;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const double* row = &dcols.data[(static_cast<size_t>(oy) * wo + ox) * k];
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= w) continue;
          const double* src = row + (ky * kw + kx) * c;
          double* dst = &dx.data[(static_cast<size_t>(iy) * w + ix) * c];
          for (int i = 0; i < c; ++i) dst[i] += src[i];
        }
      }
    }
  }
}

struct BilinearWeights {
  int x0, x1, y0, y1;
  double wx0, wx1, wy0, wy1;
};

// Align-corners-off convention with edge clamping.
BilinearWeights bilinear_at(double sx, double sy, int w, int h) {
  BilinearWeights b;
  double fx = std::floor(sx), fy = std::floor(sy);
  b.wx1 = sx - fx;
  b.wx0 = 1.0 - b.wx1;
  b.wy1 = sy - fy;
  b.wy0 = 1.0 - b.wy1;
  auto clamp = [](int v, int hi) { return std::min(std::max(v, 0), hi); };
  b.x0 = clamp(static_cast<int>(fx), w - 1);
  b.x1 = clamp(static_cast<int>(fx) + 1, w - 1);
  b.y0 = clamp(static_cast<int>(fy), h - 1);
  b.y1 = clamp(static_cast<int>(fy) + 1, h - 1);
  return b;
}

}  // namespace

Var constant(Tape& t, Tensor v) { return t.leaf(std::move(v), false); }

Var add(Var a, Var b) {
  check_same_tape(a, b);
  require(a.value().same_shape(b.value()), "add: shape mismatch");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  int pa = a.id, pb = b.id;
  return a.tape->emit(std::move(out), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    t.accumulate(pa, g);
    t.accumulate(pb, g);
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  require(a.value().same_shape(b.value()), "sub: shape mismatch");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  int pa = a.id, pb = b.id;
  return a.tape->emit(std::move(out), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    t.accumulate(pa, g);
    if (t.wants_grad(pb)) {
      Tensor& gb = t.grad_buf(pb);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  require(a.value().same_shape(b.value()), "mul: shape mismatch");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  int pa = a.id, pb = b.id;
  return a.tape->emit(std::move(out), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& va = t.node(pa).value;
    const Tensor& vb = t.node(pb).value;
    if (t.wants_grad(pa)) {
      Tensor& ga = t.grad_buf(pa);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.wants_grad(pb)) {
      Tensor& gb = t.grad_buf(pb);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.data) v *= c;
  int pa = a.id;
  return a.tape->emit(std::move(out), {pa}, [pa, c](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (!t.wants_grad(pa)) return;
    Tensor& ga = t.grad_buf(pa);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * c;
  });
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.data) v += c;
  int pa = a.id;
  return a.tape->emit(std::move(out), {pa}, [pa](Tape& t, int self) {
    t.accumulate(pa, t.node(self).grad);
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  int pa = a.id;
  return a.tape->emit(std::move(out), {pa}, [pa](Tape& t, int self) {
    if (!t.wants_grad(pa)) return;
    const Tensor& g = t.node(self).grad;
    const Tensor& x = t.node(pa).value;
    Tensor& ga = t.grad_buf(pa);
    for (int64_t i = 0; i < g.numel(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

Var leaky_relu(Var a, double alpha) {
  Tensor out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : alpha * v;
  int pa = a.id;
  return a.tape->emit(std::move(out), {pa}, [pa, alpha](Tape& t, int self) {
    if (!t.wants_grad(pa)) return;
    const Tensor& g = t.node(self).grad;
    const Tensor& x = t.node(pa).value;
    Tensor& ga = t.grad_buf(pa);
    for (int64_t i = 0; i < g.numel(); ++i)
      ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : alpha);
  });
}

Var pad_edge(Var x, int p) {
  require(x.value().ndim() == 3 && p >= 0, "pad_edge: x must be [H,W,C]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor out({h + 2 * p, w + 2 * p, c});
  auto clampi = [](int v, int hi) { return std::min(std::max(v, 0), hi); };
  for (int y = 0; y < h + 2 * p; ++y) {
    const int sy = clampi(y - p, h - 1);
    for (int xx = 0; xx < w + 2 * p; ++xx) {
      const int sx = clampi(xx - p, w - 1);
      const double* src = &x.value().data[(static_cast<size_t>(sy) * w + sx) * c];
      double* dst = &out.data[(static_cast<size_t>(y) * (w + 2 * p) + xx) * c];
      std::copy(src, src + c, dst);
    }
  }
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, h, w, c, p](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(pi);
    auto clampi = [](int v, int hi) { return std::min(std::max(v, 0), hi); };
    for (int y = 0; y < h + 2 * p; ++y) {
      const int sy = clampi(y - p, h - 1);
      for (int xx = 0; xx < w + 2 * p; ++xx) {
        const int sx = clampi(xx - p, w - 1);
        const double* src = &g.data[(static_cast<size_t>(y) * (w + 2 * p) + xx) * c];
        double* dst = &gx.data[(static_cast<size_t>(sy) * w + sx) * c];
        for (int i = 0; i < c; ++i) dst[i] += src[i];
      }
    }
  });
}

Var silu(Var a) {
  Tensor out = unary_like(a.value());
  const Tensor& x = a.value();
  for (int64_t i = 0; i < x.numel(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-x[i]));
    out[i] = x[i] * s;
  }
  int pa = a.id;
  return a.tape->emit(std::move(out), {pa}, [pa](Tape& t, int self) {
    if (!t.wants_grad(pa)) return;
    const Tensor& g = t.node(self).grad;
    const Tensor& x = t.node(pa).value;
    Tensor& ga = t.grad_buf(pa);
    for (int64_t i = 0; i < g.numel(); ++i) {
      double s = 1.0 / (1.0 + std::exp(-x[i]));
      ga[i] += g[i] * (s + x[i] * s * (1.0 - s));
    }
  });
}

Var sigmoid(Var a) {
  Tensor out = unary_like(a.value());
  const Tensor& x = a.value();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  int pa = a.id;
  return a.tape->emit(std::move(out), {pa}, [pa](Tape& t, int self) {
    if (!t.wants_grad(pa)) return;
    const Tensor& g = t.node(self).grad;
    const Tensor& y = t.node(self).value;
    Tensor& ga = t.grad_buf(pa);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  require(a.value().ndim() == 2 && b.value().ndim() == 2, "matmul: need 2-D");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dim mismatch");
  Tensor out({m, n});
  {
    CMapMat ma(a.value().data.data(), m, k);
    CMapMat mb(b.value().data.data(), k, n);
    MapMat mo(out.data.data(), m, n);
    mo.noalias() = ma * mb;
  }
  int pa = a.id, pb = b.id;
  return a.tape->emit(std::move(out), {pa, pb}, [pa, pb, m, k, n](Tape& t, int self) {
    CMapMat g(t.node(self).grad.data.data(), m, n);
    if (t.wants_grad(pa)) {
      CMapMat mb(t.node(pb).value.data.data(), k, n);
      MapMat ga(t.grad_buf(pa).data.data(), m, k);
      ga.noalias() += g * mb.transpose();
    }
    if (t.wants_grad(pb)) {
      CMapMat ma(t.node(pa).value.data.data(), m, k);
      MapMat gb(t.grad_buf(pb).data.data(), k, n);
      gb.noalias() += ma.transpose() * g;
    }
  });
}

Var matmul_nt(Var a, Var b) {
  check_same_tape(a, b);
  require(a.value().ndim() == 2 && b.value().ndim() == 2, "matmul_nt: need 2-D");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  require(b.dim(1) == k, "matmul_nt: inner dim mismatch");
  Tensor out({m, n});
  {
    CMapMat ma(a.value().data.data(), m, k);
    CMapMat mb(b.value().data.data(), n, k);
    MapMat mo(out.data.data(), m, n);
    mo.noalias() = ma * mb.transpose();
  }
  int pa = a.id, pb = b.id;
  return a.tape->emit(std::move(out), {pa, pb}, [pa, pb, m, k, n](Tape& t, int self) {
    CMapMat g(t.node(self).grad.data.data(), m, n);
    if (t.wants_grad(pa)) {
      CMapMat mb(t.node(pb).value.data.data(), n, k);
      MapMat ga(t.grad_buf(pa).data.data(), m, k);
      ga.noalias() += g * mb;
    }
    if (t.wants_grad(pb)) {
      CMapMat ma(t.node(pa).value.data.data(), m, k);
      MapMat gb(t.grad_buf(pb).data.data(), n, k);
      gb.noalias() += g.transpose() * ma;
    }
  });
}

Var add_rowbias(Var x, Var b) {
  check_same_tape(x, b);
  require(x.value().ndim() == 2 && b.value().ndim() == 1, "add_rowbias: shapes");
  const int n = x.dim(0), m = x.dim(1);
  require(b.dim(0) == m, "add_rowbias: width mismatch");
  Tensor out = x.value();
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c) out.at2(r, c) += b.value()[c];
  int px = x.id, pb = b.id;
  return x.tape->emit(std::move(out), {px, pb}, [px, pb, n, m](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    t.accumulate(px, g);
    if (t.wants_grad(pb)) {
      Tensor& gb = t.grad_buf(pb);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) gb[c] += g.at2(r, c);
    }
  });
}

Var linear(Var x, Var w, Var b) { return add_rowbias(matmul(x, w), b); }

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  check_same_tape(x, w);
  require(x.value().ndim() == 3, "conv2d: x must be [H,W,C]");
  require(w.value().ndim() == 4, "conv2d: w must be [kh,kw,Cin,Cout]");
  const int h = x.dim(0), wi = x.dim(1), cin = x.dim(2);
  const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  require(w.dim(2) == cin, "conv2d: channel mismatch");
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wi + 2 * pad - kw) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: output collapsed");
  const int k = kh * kw * cin;

  Tensor cols;
  im2col(x.value(), kh, kw, stride, pad, cols);
  Tensor out({ho, wo, cout});
  {
    CMapMat mc(cols.data.data(), ho * wo, k);
    CMapMat mw(w.value().data.data(), k, cout);
    MapMat mo(out.data.data(), ho * wo, cout);
    mo.noalias() = mc * mw;
  }
  bool has_bias = b.valid();
  if (has_bias) {
    require(b.value().ndim() == 1 && b.dim(0) == cout, "conv2d: bias shape");
    for (int r = 0; r < ho * wo; ++r)
      for (int c = 0; c < cout; ++c)
        out.data[static_cast<size_t>(r) * cout + c] += b.value()[c];
  }
  int px = x.id, pw = w.id, pb = has_bias ? b.id : -1;
  std::vector<int> parents = {px, pw};
  if (has_bias) parents.push_back(pb);
  return x.tape->emit(
      std::move(out), std::move(parents),
      [px, pw, pb, kh, kw, stride, pad, h, wi, cin, cout, ho, wo, k](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        CMapMat mg(g.data.data(), ho * wo, cout);
        if (pb >= 0 && t.wants_grad(pb)) {
          Tensor& gb = t.grad_buf(pb);
          for (int r = 0; r < ho * wo; ++r)
            for (int c = 0; c < cout; ++c)
              gb[c] += g.data[static_cast<size_t>(r) * cout + c];
        }
        if (t.wants_grad(pw)) {
          // dW = cols^T * dY ; cols recomputed to keep the tape lean
          Tensor cols;
          im2col(t.node(px).value, kh, kw, stride, pad, cols);
          CMapMat mc(cols.data.data(), ho * wo, k);
          MapMat gw(t.grad_buf(pw).data.data(), k, cout);
          gw.noalias() += mc.transpose() * mg;
        }
        if (t.wants_grad(px)) {
          Tensor dcols({ho * wo, k});
          CMapMat mw(t.node(pw).value.data.data(), k, cout);
          MapMat md(dcols.data.data(), ho * wo, k);
          md.noalias() = mg * mw.transpose();
          col2im_add(dcols, h, wi, cin, kh, kw, stride, pad, t.grad_buf(px));
        }
      });
}

Var resize_bilinear(Var x, int out_h, int out_w) {
  require(x.value().ndim() == 3, "resize_bilinear: x must be [H,W,C]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  require(out_h >= 1 && out_w >= 1, "resize_bilinear: bad target");
  if (out_h == h && out_w == w) {
    // identity resample; keep the node so gradients still flow
    Tensor out = x.value();
    int px = x.id;
    return x.tape->emit(std::move(out), {px}, [px](Tape& t, int self) {
      t.accumulate(px, t.node(self).grad);
    });
  }
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  Tensor out({out_h, out_w, c});
  const Tensor& src = x.value();
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      auto bw = bilinear_at((ox + 0.5) * sx - 0.5, (oy + 0.5) * sy - 0.5, w, h);
      double* dst = &out.data[(static_cast<size_t>(oy) * out_w + ox) * c];
      const double* p00 = &src.data[(static_cast<size_t>(bw.y0) * w + bw.x0) * c];
      const double* p01 = &src.data[(static_cast<size_t>(bw.y0) * w + bw.x1) * c];
      const double* p10 = &src.data[(static_cast<size_t>(bw.y1) * w + bw.x0) * c];
      const double* p11 = &src.data[(static_cast<size_t>(bw.y1) * w + bw.x1) * c];
      for (int i = 0; i < c; ++i)
        dst[i] = bw.wy0 * (bw.wx0 * p00[i] + bw.wx1 * p01[i]) +
                 bw.wy1 * (bw.wx0 * p10[i] + bw.wx1 * p11[i]);
    }
  }
  int px = x.id;
  return x.tape->emit(std::move(out), {px},
                      [px, h, w, c, out_h, out_w, sy, sx](Tape& t, int self) {
    if (!t.wants_grad(px)) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(px);
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        auto bw = bilinear_at((ox + 0.5) * sx - 0.5, (oy + 0.5) * sy - 0.5, w, h);
        const double* gd = &g.data[(static_cast<size_t>(oy) * out_w + ox) * c];
        double* g00 = &gx.data[(static_cast<size_t>(bw.y0) * w + bw.x0) * c];
        double* g01 = &gx.data[(static_cast<size_t>(bw.y0) * w + bw.x1) * c];
        double* g10 = &gx.data[(static_cast<size_t>(bw.y1) * w + bw.x0) * c];
        double* g11 = &gx.data[(static_cast<size_t>(bw.y1) * w + bw.x1) * c];
        for (int i = 0; i < c; ++i) {
          g00[i] += bw.wy0 * bw.wx0 * gd[i];
          g01[i] += bw.wy0 * bw.wx1 * gd[i];
          g10[i] += bw.wy1 * bw.wx0 * gd[i];
          g11[i] += bw.wy1 * bw.wx1 * gd[i];
        }
      }
    }
  });
}

Var group_norm(Var x, Var gamma, Var beta, int groups, double eps) {
  check_same_tape(x, gamma);
  require(x.value().ndim() == 3, "group_norm: x must be [H,W,C]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  require(c % groups == 0, "group_norm: channels not divisible by groups");
  require(gamma.dim(0) == c && beta.dim(0) == c, "group_norm: affine shape");
  const int cg = c / groups;
  const int64_t m = static_cast<int64_t>(h) * w * cg;

  Tensor out({h, w, c});
  std::vector<double> mean(static_cast<size_t>(groups), 0.0);
  std::vector<double> inv_std(static_cast<size_t>(groups), 0.0);
  const Tensor& src = x.value();
  for (int g = 0; g < groups; ++g) {
    double mu = 0.0;
    for (int64_t px = 0; px < static_cast<int64_t>(h) * w; ++px)
      for (int i = 0; i < cg; ++i) mu += src.data[static_cast<size_t>(px * c + g * cg + i)];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (int64_t px = 0; px < static_cast<int64_t>(h) * w; ++px)
      for (int i = 0; i < cg; ++i) {
        double d = src.data[static_cast<size_t>(px * c + g * cg + i)] - mu;
        var += d * d;
      }
    var /= static_cast<double>(m);
    mean[static_cast<size_t>(g)] = mu;
    inv_std[static_cast<size_t>(g)] = 1.0 / std::sqrt(var + eps);
  }
  for (int64_t px = 0; px < static_cast<int64_t>(h) * w; ++px)
    for (int ch = 0; ch < c; ++ch) {
      int g = ch / cg;
      double xhat = (src.data[static_cast<size_t>(px * c + ch)] - mean[static_cast<size_t>(g)]) *
                    inv_std[static_cast<size_t>(g)];
      out.data[static_cast<size_t>(px * c + ch)] =
          gamma.value()[ch] * xhat + beta.value()[ch];
    }

  int pi = x.id, pg = gamma.id, pb = beta.id;
  return x.tape->emit(
      std::move(out), {pi, pg, pb},
      [pi, pg, pb, h, w, c, cg, groups, m, mean, inv_std](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& src = t.node(pi).value;
        const Tensor& gam = t.node(pg).value;
        const int64_t hw = static_cast<int64_t>(h) * w;
        // d gamma / d beta
        if (t.wants_grad(pg) || t.wants_grad(pb)) {
          Tensor* ggam = t.wants_grad(pg) ? &t.grad_buf(pg) : nullptr;
          Tensor* gbet = t.wants_grad(pb) ? &t.grad_buf(pb) : nullptr;
          for (int64_t px = 0; px < hw; ++px)
            for (int ch = 0; ch < c; ++ch) {
              int grp = ch / cg;
              double xhat = (src.data[static_cast<size_t>(px * c + ch)] - mean[static_cast<size_t>(grp)]) *
                            inv_std[static_cast<size_t>(grp)];
              double gv = g.data[static_cast<size_t>(px * c + ch)];
              if (ggam) ggam->data[static_cast<size_t>(ch)] += gv * xhat;
              if (gbet) gbet->data[static_cast<size_t>(ch)] += gv;
            }
        }
        if (!t.wants_grad(pi)) return;
        Tensor& gx = t.grad_buf(pi);
        for (int grp = 0; grp < groups; ++grp) {
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int64_t px = 0; px < hw; ++px)
            for (int i = 0; i < cg; ++i) {
              int ch = grp * cg + i;
              double xhat = (src.data[static_cast<size_t>(px * c + ch)] - mean[static_cast<size_t>(grp)]) *
                            inv_std[static_cast<size_t>(grp)];
              double dxhat = g.data[static_cast<size_t>(px * c + ch)] * gam[ch];
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
            }
          const double inv_m = 1.0 / static_cast<double>(m);
          for (int64_t px = 0; px < hw; ++px)
            for (int i = 0; i < cg; ++i) {
              int ch = grp * cg + i;
              double xhat = (src.data[static_cast<size_t>(px * c + ch)] - mean[static_cast<size_t>(grp)]) *
                            inv_std[static_cast<size_t>(grp)];
              double dxhat = g.data[static_cast<size_t>(px * c + ch)] * gam[ch];
              gx.data[static_cast<size_t>(px * c + ch)] +=
                  inv_std[static_cast<size_t>(grp)] *
                  (dxhat - inv_m * sum_dxhat - xhat * inv_m * sum_dxhat_xhat);
            }
        }
      });
}

Var add_bias_c(Var x, Var b) {
  check_same_tape(x, b);
  require(x.value().ndim() == 3 && b.value().ndim() == 1, "add_bias_c: shapes");
  const int c = x.dim(2);
  require(b.dim(0) == c, "add_bias_c: channel mismatch");
  Tensor out = x.value();
  const int64_t hw = static_cast<int64_t>(x.dim(0)) * x.dim(1);
  for (int64_t px = 0; px < hw; ++px)
    for (int ch = 0; ch < c; ++ch) out.data[static_cast<size_t>(px * c + ch)] += b.value()[ch];
  int pi = x.id, pb = b.id;
  return x.tape->emit(std::move(out), {pi, pb}, [pi, pb, hw, c](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    t.accumulate(pi, g);
    if (t.wants_grad(pb)) {
      Tensor& gb = t.grad_buf(pb);
      for (int64_t px = 0; px < hw; ++px)
        for (int ch = 0; ch < c; ++ch) gb[ch] += g.data[static_cast<size_t>(px * c + ch)];
    }
  });
}

Var mul_bcast_c(Var x, Var g) {
  check_same_tape(x, g);
  require(x.value().ndim() == 3 && g.value().ndim() == 1, "mul_bcast_c: shapes");
  const int c = x.dim(2);
  require(g.dim(0) == c, "mul_bcast_c: channel mismatch");
  Tensor out = x.value();
  const int64_t hw = static_cast<int64_t>(x.dim(0)) * x.dim(1);
  for (int64_t px = 0; px < hw; ++px)
    for (int ch = 0; ch < c; ++ch) out.data[static_cast<size_t>(px * c + ch)] *= g.value()[ch];
  int pi = x.id, pg = g.id;
  return x.tape->emit(std::move(out), {pi, pg}, [pi, pg, hw, c](Tape& t, int self) {
    const Tensor& gr = t.node(self).grad;
    const Tensor& xv = t.node(pi).value;
    const Tensor& gv = t.node(pg).value;
    if (t.wants_grad(pi)) {
      Tensor& gx = t.grad_buf(pi);
      for (int64_t px = 0; px < hw; ++px)
        for (int ch = 0; ch < c; ++ch)
          gx.data[static_cast<size_t>(px * c + ch)] += gr.data[static_cast<size_t>(px * c + ch)] * gv[ch];
    }
    if (t.wants_grad(pg)) {
      Tensor& gg = t.grad_buf(pg);
      for (int64_t px = 0; px < hw; ++px)
        for (int ch = 0; ch < c; ++ch)
          gg[ch] += gr.data[static_cast<size_t>(px * c + ch)] * xv.data[static_cast<size_t>(px * c + ch)];
    }
  });
}

Var mul_bcast_hw(Var x, Var g) {
  check_same_tape(x, g);
  require(x.value().ndim() == 3 && g.value().ndim() == 3, "mul_bcast_hw: shapes");
  require(g.dim(0) == x.dim(0) && g.dim(1) == x.dim(1) && g.dim(2) == 1,
          "mul_bcast_hw: gate must be [H,W,1]");
  const int c = x.dim(2);
  const int64_t hw = static_cast<int64_t>(x.dim(0)) * x.dim(1);
  Tensor out = x.value();
  for (int64_t px = 0; px < hw; ++px) {
    double gv = g.value()[px];
    for (int ch = 0; ch < c; ++ch) out.data[static_cast<size_t>(px * c + ch)] *= gv;
  }
  int pi = x.id, pg = g.id;
  return x.tape->emit(std::move(out), {pi, pg}, [pi, pg, hw, c](Tape& t, int self) {
    const Tensor& gr = t.node(self).grad;
    const Tensor& xv = t.node(pi).value;
    const Tensor& gv = t.node(pg).value;
    if (t.wants_grad(pi)) {
      Tensor& gx = t.grad_buf(pi);
      for (int64_t px = 0; px < hw; ++px)
        for (int ch = 0; ch < c; ++ch)
          gx.data[static_cast<size_t>(px * c + ch)] += gr.data[static_cast<size_t>(px * c + ch)] * gv[px];
    }
    if (t.wants_grad(pg)) {
      Tensor& gg = t.grad_buf(pg);
      for (int64_t px = 0; px < hw; ++px) {
        double acc = 0.0;
        for (int ch = 0; ch < c; ++ch)
          acc += gr.data[static_cast<size_t>(px * c + ch)] * xv.data[static_cast<size_t>(px * c + ch)];
        gg[px] += acc;
      }
    }
  });
}

Var concat_c(Var a, Var b) {
  check_same_tape(a, b);
  require(a.value().ndim() == 3 && b.value().ndim() == 3, "concat_c: shapes");
  require(a.dim(0) == b.dim(0) && a.dim(1) == b.dim(1), "concat_c: spatial mismatch");
  const int h = a.dim(0), w = a.dim(1), ca = a.dim(2), cb = b.dim(2);
  Tensor out({h, w, ca + cb});
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int64_t px = 0; px < hw; ++px) {
    std::copy(&a.value().data[static_cast<size_t>(px * ca)], &a.value().data[static_cast<size_t>(px * ca)] + ca,
              &out.data[static_cast<size_t>(px * (ca + cb))]);
    std::copy(&b.value().data[static_cast<size_t>(px * cb)], &b.value().data[static_cast<size_t>(px * cb)] + cb,
              &out.data[static_cast<size_t>(px * (ca + cb))] + ca);
  }
  int pa = a.id, pb = b.id;
  return a.tape->emit(std::move(out), {pa, pb}, [pa, pb, hw, ca, cb](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (t.wants_grad(pa)) {
      Tensor& ga = t.grad_buf(pa);
      for (int64_t px = 0; px < hw; ++px)
        for (int i = 0; i < ca; ++i)
          ga.data[static_cast<size_t>(px * ca + i)] += g.data[static_cast<size_t>(px * (ca + cb) + i)];
    }
    if (t.wants_grad(pb)) {
      Tensor& gb = t.grad_buf(pb);
      for (int64_t px = 0; px < hw; ++px)
        for (int i = 0; i < cb; ++i)
          gb.data[static_cast<size_t>(px * cb + i)] += g.data[static_cast<size_t>(px * (ca + cb) + ca + i)];
    }
  });
}

Var spatial_mean(Var x) {
  require(x.value().ndim() == 3, "spatial_mean: x must be [H,W,C]");
  const int c = x.dim(2);
  const int64_t hw = static_cast<int64_t>(x.dim(0)) * x.dim(1);
  Tensor out({c});
  for (int64_t px = 0; px < hw; ++px)
    for (int ch = 0; ch < c; ++ch) out[ch] += x.value().data[static_cast<size_t>(px * c + ch)];
  for (int ch = 0; ch < c; ++ch) out[ch] /= static_cast<double>(hw);
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, hw, c](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(pi);
    const double inv = 1.0 / static_cast<double>(hw);
    for (int64_t px = 0; px < hw; ++px)
      for (int ch = 0; ch < c; ++ch) gx.data[static_cast<size_t>(px * c + ch)] += g[ch] * inv;
  });
}

Var spatial_max(Var x) {
  require(x.value().ndim() == 3, "spatial_max: x must be [H,W,C]");
  const int c = x.dim(2);
  const int64_t hw = static_cast<int64_t>(x.dim(0)) * x.dim(1);
  Tensor out({c});
  std::vector<int64_t> argmax(static_cast<size_t>(c), 0);
  for (int ch = 0; ch < c; ++ch) {
    double best = x.value().data[static_cast<size_t>(ch)];
    int64_t bi = 0;
    for (int64_t px = 1; px < hw; ++px) {
      double v = x.value().data[static_cast<size_t>(px * c + ch)];
      if (v > best) {
        best = v;
        bi = px;
      }
    }
    out[ch] = best;
    argmax[static_cast<size_t>(ch)] = bi;
  }
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, c, argmax](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(pi);
    for (int ch = 0; ch < c; ++ch)
      gx.data[static_cast<size_t>(argmax[static_cast<size_t>(ch)] * c + ch)] += g[ch];
  });
}

Var channel_mean(Var x) {
  require(x.value().ndim() == 3, "channel_mean: x must be [H,W,C]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const int64_t hw = static_cast<int64_t>(h) * w;
  Tensor out({h, w, 1});
  for (int64_t px = 0; px < hw; ++px) {
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) acc += x.value().data[static_cast<size_t>(px * c + ch)];
    out[px] = acc / c;
  }
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, hw, c](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(pi);
    const double inv = 1.0 / c;
    for (int64_t px = 0; px < hw; ++px)
      for (int ch = 0; ch < c; ++ch) gx.data[static_cast<size_t>(px * c + ch)] += g[px] * inv;
  });
}

Var channel_max(Var x) {
  require(x.value().ndim() == 3, "channel_max: x must be [H,W,C]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const int64_t hw = static_cast<int64_t>(h) * w;
  Tensor out({h, w, 1});
  std::vector<int> argmax(static_cast<size_t>(hw), 0);
  for (int64_t px = 0; px < hw; ++px) {
    double best = x.value().data[static_cast<size_t>(px * c)];
    int bi = 0;
    for (int ch = 1; ch < c; ++ch) {
      double v = x.value().data[static_cast<size_t>(px * c + ch)];
      if (v > best) {
        best = v;
        bi = ch;
      }
    }
    out[px] = best;
    argmax[static_cast<size_t>(px)] = bi;
  }
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, hw, c, argmax](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(pi);
    for (int64_t px = 0; px < hw; ++px)
      gx.data[static_cast<size_t>(px * c + argmax[static_cast<size_t>(px)])] += g[px];
  });
}

Var sample_bilinear_points(Var x, const std::vector<std::pair<double, double>>& pts) {
  require(x.value().ndim() == 3, "sample_bilinear_points: x must be [H,W,C]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const int n = static_cast<int>(pts.size());
  Tensor out({n, c});
  std::vector<BilinearWeights> ws(pts.size());
  for (int i = 0; i < n; ++i) {
    ws[static_cast<size_t>(i)] = bilinear_at(pts[static_cast<size_t>(i)].first,
                                             pts[static_cast<size_t>(i)].second, w, h);
    const auto& bw = ws[static_cast<size_t>(i)];
    const Tensor& src = x.value();
    for (int ch = 0; ch < c; ++ch) {
      out.at2(i, ch) =
          bw.wy0 * (bw.wx0 * src.at3(bw.y0, bw.x0, ch) + bw.wx1 * src.at3(bw.y0, bw.x1, ch)) +
          bw.wy1 * (bw.wx0 * src.at3(bw.y1, bw.x0, ch) + bw.wx1 * src.at3(bw.y1, bw.x1, ch));
    }
  }
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, ws, c, w](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(pi);
    for (size_t i = 0; i < ws.size(); ++i) {
      const auto& bw = ws[i];
      for (int ch = 0; ch < c; ++ch) {
        double gv = g.data[i * static_cast<size_t>(c) + static_cast<size_t>(ch)];
        gx.data[(static_cast<size_t>(bw.y0) * w + bw.x0) * c + static_cast<size_t>(ch)] += bw.wy0 * bw.wx0 * gv;
        gx.data[(static_cast<size_t>(bw.y0) * w + bw.x1) * c + static_cast<size_t>(ch)] += bw.wy0 * bw.wx1 * gv;
        gx.data[(static_cast<size_t>(bw.y1) * w + bw.x0) * c + static_cast<size_t>(ch)] += bw.wy1 * bw.wx0 * gv;
        gx.data[(static_cast<size_t>(bw.y1) * w + bw.x1) * c + static_cast<size_t>(ch)] += bw.wy1 * bw.wx1 * gv;
      }
    }
  });
}

Var softmax_vec(Var x) {
  require(x.value().ndim() == 1, "softmax_vec: x must be [n]");
  const int n = x.dim(0);
  Tensor out({n});
  double mx = x.value().max();
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x.value()[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= z;
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, n](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    const Tensor& s = t.node(self).value;
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += g[i] * s[i];
    Tensor& gx = t.grad_buf(pi);
    for (int i = 0; i < n; ++i) gx[i] += s[i] * (g[i] - dot);
  });
}

Var row_logsumexp(Var x) {
  require(x.value().ndim() == 2, "row_logsumexp: x must be [n,m]");
  const int n = x.dim(0), m = x.dim(1);
  Tensor out({n});
  for (int r = 0; r < n; ++r) {
    double mx = -1e300;
    for (int c = 0; c < m; ++c) mx = std::max(mx, x.value().at2(r, c));
    double z = 0.0;
    for (int c = 0; c < m; ++c) z += std::exp(x.value().at2(r, c) - mx);
    out[r] = mx + std::log(z);
  }
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, n, m](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    const Tensor& xv = t.node(pi).value;
    const Tensor& lse = t.node(self).value;
    Tensor& gx = t.grad_buf(pi);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < m; ++c)
        gx.at2(r, c) += g[r] * std::exp(xv.at2(r, c) - lse[r]);
  });
}

Var take_diag(Var x) {
  require(x.value().ndim() == 2 && x.dim(0) == x.dim(1), "take_diag: x must be [n,n]");
  const int n = x.dim(0);
  Tensor out({n});
  for (int i = 0; i < n; ++i) out[i] = x.value().at2(i, i);
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, n](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(pi);
    for (int i = 0; i < n; ++i) gx.at2(i, i) += g[i];
  });
}

Var mean_all(Var x) {
  const int64_t n = x.value().numel();
  double acc = 0.0;
  for (double v : x.value().data) acc += v;
  Tensor out({1});
  out[0] = acc / static_cast<double>(n);
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, n](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const double g = t.node(self).grad[0] / static_cast<double>(n);
    Tensor& gx = t.grad_buf(pi);
    for (double& v : gx.data) v += g;
  });
}

Var sum_all(Var x) {
  double acc = 0.0;
  for (double v : x.value().data) acc += v;
  Tensor out({1});
  out[0] = acc;
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const double g = t.node(self).grad[0];
    Tensor& gx = t.grad_buf(pi);
    for (double& v : gx.data) v += g;
  });
}

Var l2_normalize_rows(Var x, double eps) {
  require(x.value().ndim() == 2, "l2_normalize_rows: x must be [n,d]");
  const int n = x.dim(0), d = x.dim(1);
  Tensor out({n, d});
  std::vector<double> norms(static_cast<size_t>(n), 0.0);
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += x.value().at2(r, c) * x.value().at2(r, c);
    double nn = std::sqrt(s + eps);
    norms[static_cast<size_t>(r)] = nn;
    for (int c = 0; c < d; ++c) out.at2(r, c) = x.value().at2(r, c) / nn;
  }
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi, n, d, norms](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    const Tensor& y = t.node(self).value;
    Tensor& gx = t.grad_buf(pi);
    for (int r = 0; r < n; ++r) {
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += g.at2(r, c) * y.at2(r, c);
      const double inv = 1.0 / norms[static_cast<size_t>(r)];
      for (int c = 0; c < d; ++c)
        gx.at2(r, c) += (g.at2(r, c) - y.at2(r, c) * dot) * inv;
    }
  });
}

Var scale_by_vec_elem(Var x, Var v, int idx) {
  check_same_tape(x, v);
  require(v.value().ndim() == 1 && idx >= 0 && idx < v.dim(0),
          "scale_by_vec_elem: bad index");
  const double s = v.value()[idx];
  Tensor out = x.value();
  for (double& e : out.data) e *= s;
  int px = x.id, pv = v.id;
  return x.tape->emit(std::move(out), {px, pv}, [px, pv, idx, s](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (t.wants_grad(px)) {
      Tensor& gx = t.grad_buf(px);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * s;
    }
    if (t.wants_grad(pv)) {
      const Tensor& xv = t.node(px).value;
      double acc = 0.0;
      for (int64_t i = 0; i < g.numel(); ++i) acc += g[i] * xv[i];
      t.grad_buf(pv)[idx] += acc;
    }
  });
}

Var reshape(Var x, std::vector<int> shape) {
  require(Tensor::numel_of(shape) == x.value().numel(), "reshape: numel mismatch");
  Tensor out(std::move(shape), x.value().data);
  int pi = x.id;
  return x.tape->emit(std::move(out), {pi}, [pi](Tape& t, int self) {
    if (!t.wants_grad(pi)) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(pi);
    for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

}  // namespace osmid::ad
