#include "iw/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "iw/errors.hpp"

namespace iw::ad {

namespace {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeMismatch(std::string(op) + ": shapes " + shape_str(a) + " vs " +
                      shape_str(b));
}

// True when `small` equals the trailing dimensions of `big`.
bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Elementwise binary op with suffix (leading-batch) broadcasting.
template <class Fwd, class Bwd>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                 Bwd bwd) {
  const bool a_big = is_suffix(a.shape(), b.shape());
  const bool b_big = is_suffix(b.shape(), a.shape());
  if (!a_big && !b_big) mismatch(name, a.shape(), b.shape());
  // When shapes are equal both flags hold and orientation is irrelevant.
  const Tensor& big = a_big ? a : b;
  const Tensor& small = a_big ? b : a;
  const bool a_is_big = a_big;

  const auto n = static_cast<size_t>(big.size());
  const auto m = static_cast<size_t>(small.size());
  std::vector<double> out(n);
  const auto bv = big.value();
  const auto sv = small.value();
  for (size_t i = 0; i < n; ++i) {
    const double x = a_is_big ? bv[i] : sv[i % m];
    const double y = a_is_big ? sv[i % m] : bv[i];
    out[i] = fwd(x, y);
  }

  return make_op(big.shape(), std::move(out), {a, b},
                 [a_is_big, n, m, bwd](Node& self) {
                   Node& pa = *self.parents[0];
                   Node& pb = *self.parents[1];
                   Node& pbig = a_is_big ? pa : pb;
                   Node& psmall = a_is_big ? pb : pa;
                   for (size_t i = 0; i < n; ++i) {
                     const double g = self.grad[i];
                     const double x =
                         a_is_big ? pbig.value[i] : psmall.value[i % m];
                     const double y =
                         a_is_big ? psmall.value[i % m] : pbig.value[i];
                     double gx, gy;
                     bwd(x, y, g, gx, gy);
                     const double gbig = a_is_big ? gx : gy;
                     const double gsmall = a_is_big ? gy : gx;
                     if (pbig.requires_grad) pbig.grad[i] += gbig;
                     if (psmall.requires_grad) psmall.grad[i % m] += gsmall;
                   }
                 });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& gx, double& gy) {
        gx = g;
        gy = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& gx, double& gy) {
        gx = g;
        gy = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& gx, double& gy) {
        gx = g * y;
        gy = g * x;
      });
}

Tensor scalar_mul(const Tensor& a, double s) {
  std::vector<double> out(a.value().begin(), a.value().end());
  for (double& v : out) v *= s;
  return make_op(a.shape(), std::move(out), {a}, [s](Node& self) {
    Node& p = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += s * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.value().begin(), a.value().end());
  for (double& v : out) v += s;
  return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor neg(const Tensor& a) { return scalar_mul(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    mismatch("matmul", a.shape(), b.shape());
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];

  std::vector<double> out(static_cast<size_t>(m) * n);
  {
    ConstMapRM am(a.value().data(), m, k);
    ConstMapRM bm(b.value().data(), k, n);
    MapRM om(out.data(), m, n);
    om.noalias() = am * bm;
  }
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    ConstMapRM g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      ConstMapRM bm(pb.value.data(), k, n);
      MapRM ga(pa.grad.data(), m, k);
      ga.noalias() += g * bm.transpose();
    }
    if (pb.requires_grad) {
      ConstMapRM am(pa.value.data(), m, k);
      MapRM gb(pb.grad.data(), k, n);
      gb.noalias() += am.transpose() * g;
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.value().begin(), a.value().end());
  for (double& v : out) v = v > 0 ? v : 0.0;
  return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (p.value[i] > 0) p.grad[i] += self.grad[i];
  });
}

Tensor softmax(const Tensor& a) {
  if (a.shape().empty()) mismatch("softmax", a.shape(), {});
  const int last = a.shape().back();
  const auto rows = static_cast<size_t>(a.size() / last);
  std::vector<double> out(static_cast<size_t>(a.size()));
  const auto v = a.value();
  for (size_t r = 0; r < rows; ++r) {
    const size_t base = r * last;
    double mx = v[base];
    for (int i = 1; i < last; ++i) mx = std::max(mx, v[base + i]);
    double denom = 0;
    for (int i = 0; i < last; ++i) {
      out[base + i] = std::exp(v[base + i] - mx);
      denom += out[base + i];
    }
    for (int i = 0; i < last; ++i) out[base + i] /= denom;
  }
  return make_op(a.shape(), std::move(out), {a}, [rows, last](Node& self) {
    Node& p = *self.parents[0];
    for (size_t r = 0; r < rows; ++r) {
      const size_t base = r * last;
      double dot = 0;
      for (int i = 0; i < last; ++i)
        dot += self.grad[base + i] * self.value[base + i];
      for (int i = 0; i < last; ++i)
        p.grad[base + i] +=
            self.value[base + i] * (self.grad[base + i] - dot);
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) mismatch("reshape", a.shape(), shape);
  std::vector<double> out(a.value().begin(), a.value().end());
  return make_op(std::move(shape), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw InvalidConfig("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(ref.size()))
    throw InvalidConfig("concat: bad axis " + std::to_string(axis));

  int axis_total = 0;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != ref.size()) mismatch("concat", ref, s);
    for (size_t d = 0; d < s.size(); ++d)
      if (static_cast<int>(d) != axis && s[d] != ref[d])
        mismatch("concat", ref, s);
    axis_total += s[static_cast<size_t>(axis)];
  }

  Shape out_shape = ref;
  out_shape[static_cast<size_t>(axis)] = axis_total;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= ref[static_cast<size_t>(d)];
  for (size_t d = static_cast<size_t>(axis) + 1; d < ref.size(); ++d)
    inner *= ref[d];

  std::vector<double> out(static_cast<size_t>(shape_size(out_shape)));
  std::vector<std::int64_t> offsets;  // per part, in axis units
  std::int64_t off = 0;
  for (const auto& t : parts) {
    offsets.push_back(off);
    const std::int64_t len = t.shape()[static_cast<size_t>(axis)];
    const auto src = t.value();
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(&out[static_cast<size_t>((o * axis_total + off) * inner)],
                  &src[static_cast<size_t>(o * len * inner)],
                  static_cast<size_t>(len * inner) * sizeof(double));
    off += len;
  }

  std::vector<Tensor> inputs(parts.begin(), parts.end());
  std::vector<std::int64_t> lens;
  for (const auto& t : parts) lens.push_back(t.shape()[static_cast<size_t>(axis)]);
  return make_op(std::move(out_shape), std::move(out), std::move(inputs),
                 [outer, inner, axis_total, offsets, lens](Node& self) {
                   for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                     Node& p = *self.parents[pi];
                     if (!p.requires_grad) continue;
                     const std::int64_t len = lens[pi], o0 = offsets[pi];
                     for (std::int64_t o = 0; o < outer; ++o)
                       for (std::int64_t i = 0; i < len * inner; ++i)
                         p.grad[static_cast<size_t>(o * len * inner + i)] +=
                             self.grad[static_cast<size_t>(
                                 (o * axis_total + o0) * inner + i)];
                   }
                 });
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()) || start < 0 || len <= 0 ||
      start + len > s[static_cast<size_t>(axis)])
    throw InvalidConfig("slice: range [" + std::to_string(start) + "," +
                        std::to_string(start + len) + ") bad for axis " +
                        std::to_string(axis) + " of " + shape_str(s));
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[static_cast<size_t>(d)];
  for (size_t d = static_cast<size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
  const std::int64_t axis_len = s[static_cast<size_t>(axis)];

  Shape out_shape = s;
  out_shape[static_cast<size_t>(axis)] = len;
  std::vector<double> out(static_cast<size_t>(outer * len * inner));
  const auto src = a.value();
  for (std::int64_t o = 0; o < outer; ++o)
    std::memcpy(&out[static_cast<size_t>(o * len * inner)],
                &src[static_cast<size_t>((o * axis_len + start) * inner)],
                static_cast<size_t>(len * inner) * sizeof(double));

  return make_op(std::move(out_shape), std::move(out), {a},
                 [outer, inner, axis_len, start, len](Node& self) {
                   Node& p = *self.parents[0];
                   for (std::int64_t o = 0; o < outer; ++o)
                     for (std::int64_t i = 0; i < len * inner; ++i)
                       p.grad[static_cast<size_t>(
                           (o * axis_len + start) * inner + i)] +=
                           self.grad[static_cast<size_t>(o * len * inner + i)];
                 });
}

Tensor sum(const Tensor& a) {
  double s = 0;
  for (double v : a.value()) s += v;
  return make_op({1}, {s}, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0;
  for (double v : a.value()) s += v;
  return make_op({1}, {s * inv}, {a}, [inv](Node& self) {
    Node& p = *self.parents[0];
    for (double& g : p.grad) g += self.grad[0] * inv;
  });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  int n, c, h, w, o, k, stride, pad, oh, ow;
};

void im2col(const double* x, const ConvDims& d, double* col) {
  // col is (c*k*k) x (oh*ow)
  const int span = d.oh * d.ow;
  for (int c = 0; c < d.c; ++c) {
    const double* plane = x + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
    for (int ky = 0; ky < d.k; ++ky)
      for (int kx = 0; kx < d.k; ++kx) {
        double* row = col + static_cast<std::ptrdiff_t>((c * d.k + ky) * d.k + kx) * span;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            row[oy * d.ow + ox] =
                (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                    ? plane[iy * d.w + ix]
                    : 0.0;
          }
        }
      }
  }
}

void col2im_add(const double* col, const ConvDims& d, double* x) {
  const int span = d.oh * d.ow;
  for (int c = 0; c < d.c; ++c) {
    double* plane = x + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
    for (int ky = 0; ky < d.k; ++ky)
      for (int kx = 0; kx < d.k; ++kx) {
        const double* row =
            col + static_cast<std::ptrdiff_t>((c * d.k + ky) * d.k + kx) * span;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) continue;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix < 0 || ix >= d.w) continue;
            plane[iy * d.w + ix] += row[oy * d.ow + ox];
          }
        }
      }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
              int stride, int padding) {
  const Shape& xs = x.shape();
  const Shape& ks = kernels.shape();
  if (xs.size() != 4 || ks.size() != 4 || xs[1] != ks[1])
    mismatch("conv2d", xs, ks);
  if (ks[2] != ks[3] || ks[2] % 2 == 0)
    throw InvalidConfig("conv2d: kernels must be square with odd size, got " +
                        shape_str(ks));
  if (stride < 1) throw InvalidConfig("conv2d: stride must be >= 1");

  ConvDims d;
  d.n = xs[0]; d.c = xs[1]; d.h = xs[2]; d.w = xs[3];
  d.o = ks[0]; d.k = ks[2]; d.stride = stride; d.pad = padding;
  // Floor output sizing; a stride-2 3x3 block halves even extents.
  d.oh = (d.h + 2 * padding - d.k) / stride + 1;
  d.ow = (d.w + 2 * padding - d.k) / stride + 1;
  if (d.h + 2 * padding < d.k || d.w + 2 * padding < d.k || d.oh <= 0 ||
      d.ow <= 0)
    throw ShapeMismatch("conv2d: empty output for input " + shape_str(xs) +
                        " kernel " + shape_str(ks) + " stride " +
                        std::to_string(stride) + " pad " +
                        std::to_string(padding));

  const bool with_bias = bias.defined();
  if (with_bias && (bias.shape().size() != 1 || bias.shape()[0] != d.o))
    mismatch("conv2d bias", bias.shape(), {d.o});

  const int kdim = d.c * d.k * d.k;
  const int span = d.oh * d.ow;
  std::vector<double> col(static_cast<size_t>(kdim) * span);
  std::vector<double> out(static_cast<size_t>(d.n) * d.o * span);

  ConstMapRM kmat(kernels.value().data(), d.o, kdim);
  for (int n = 0; n < d.n; ++n) {
    im2col(x.value().data() + static_cast<std::ptrdiff_t>(n) * d.c * d.h * d.w,
           d, col.data());
    ConstMapRM cm(col.data(), kdim, span);
    MapRM om(out.data() + static_cast<std::ptrdiff_t>(n) * d.o * span, d.o, span);
    om.noalias() = kmat * cm;
    if (with_bias) {
      const auto bv = bias.value();
      for (int o = 0; o < d.o; ++o) {
        double* row = out.data() +
                      (static_cast<std::ptrdiff_t>(n) * d.o + o) * span;
        for (int s = 0; s < span; ++s) row[s] += bv[static_cast<size_t>(o)];
      }
    }
  }

  std::vector<Tensor> inputs = {x, kernels};
  if (with_bias) inputs.push_back(bias);

  std::function<void(Node&)> bp;
  if (x.requires_grad() || kernels.requires_grad() ||
      (with_bias && bias.requires_grad())) {
    bp = [d, kdim, span, with_bias](Node& self) {
      Node& px = *self.parents[0];
      Node& pk = *self.parents[1];
      std::vector<double> col(static_cast<size_t>(kdim) * span);
      std::vector<double> dcol(static_cast<size_t>(kdim) * span);
      ConstMapRM kmat(pk.value.data(), d.o, kdim);
      for (int n = 0; n < d.n; ++n) {
        ConstMapRM g(self.grad.data() + static_cast<std::ptrdiff_t>(n) * d.o * span,
                     d.o, span);
        if (pk.requires_grad || px.requires_grad)
          im2col(px.value.data() + static_cast<std::ptrdiff_t>(n) * d.c * d.h * d.w,
                 d, col.data());
        if (pk.requires_grad) {
          ConstMapRM cm(col.data(), kdim, span);
          MapRM kg(pk.grad.data(), d.o, kdim);
          kg.noalias() += g * cm.transpose();
        }
        if (px.requires_grad) {
          MapRM dc(dcol.data(), kdim, span);
          dc.noalias() = kmat.transpose() * g;
          col2im_add(dcol.data(), d,
                     px.grad.data() +
                         static_cast<std::ptrdiff_t>(n) * d.c * d.h * d.w);
        }
        if (with_bias) {
          Node& pb = *self.parents[2];
          if (pb.requires_grad)
            for (int o = 0; o < d.o; ++o) {
              double s = 0;
              const double* row =
                  self.grad.data() +
                  (static_cast<std::ptrdiff_t>(n) * d.o + o) * span;
              for (int i = 0; i < span; ++i) s += row[i];
              pb.grad[static_cast<size_t>(o)] += s;
            }
        }
      }
    };
  }
  return make_op({d.n, d.o, d.oh, d.ow}, std::move(out), std::move(inputs),
                 std::move(bp));
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    mismatch("l1_loss", pred.shape(), target.shape());
  const auto n = static_cast<size_t>(pred.size());
  const double inv = 1.0 / static_cast<double>(n);
  double s = 0;
  for (size_t i = 0; i < n; ++i)
    s += std::abs(pred.value()[i] - target.value()[i]);
  return make_op({1}, {s * inv}, {pred, target}, [n, inv](Node& self) {
    Node& pp = *self.parents[0];
    Node& pt = *self.parents[1];
    for (size_t i = 0; i < n; ++i) {
      const double diff = pp.value[i] - pt.value[i];
      const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      const double g = self.grad[0] * inv * sign;
      if (pp.requires_grad) pp.grad[i] += g;
      if (pt.requires_grad) pt.grad[i] -= g;
    }
  });
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) mismatch("global_avg_pool", s, {-1, -1, -1, -1});
  const int n = s[0], c = s[1];
  const std::int64_t hw = static_cast<std::int64_t>(s[2]) * s[3];
  const double inv = 1.0 / static_cast<double>(hw);
  std::vector<double> out(static_cast<size_t>(n) * c);
  for (int i = 0; i < n * c; ++i) {
    const double* plane = x.value().data() + static_cast<std::ptrdiff_t>(i) * hw;
    double acc = 0;
    for (std::int64_t j = 0; j < hw; ++j) acc += plane[j];
    out[static_cast<size_t>(i)] = acc * inv;
  }
  return make_op({n, c}, std::move(out), {x}, [n, c, hw, inv](Node& self) {
    Node& p = *self.parents[0];
    for (int i = 0; i < n * c; ++i) {
      const double g = self.grad[static_cast<size_t>(i)] * inv;
      double* plane = p.grad.data() + static_cast<std::ptrdiff_t>(i) * hw;
      for (std::int64_t j = 0; j < hw; ++j) plane[j] += g;
    }
  });
}

Tensor sample_features(const Tensor& f, const Tensor& pos) {
  const Shape& fs = f.shape();
  const Shape& ps = pos.shape();
  if (fs.size() != 4 || ps.size() != 3 || ps[0] != fs[0] || ps[2] != 2)
    mismatch("sample_features", fs, ps);
  const int n = fs[0], c = fs[1], h = fs[2], w = fs[3], np = ps[1];

  std::vector<double> out(static_cast<size_t>(n) * np * c);
  const auto fv = f.value();
  const auto pv = pos.value();
  const auto clampf = [](double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
  };
  for (int ni = 0; ni < n; ++ni)
    for (int pi = 0; pi < np; ++pi) {
      const double rx = pv[(static_cast<size_t>(ni) * np + pi) * 2 + 0];
      const double ry = pv[(static_cast<size_t>(ni) * np + pi) * 2 + 1];
      const double x = clampf(rx, 0.0, w - 1.0);
      const double y = clampf(ry, 0.0, h - 1.0);
      const int x0 = std::min(static_cast<int>(x), w >= 2 ? w - 2 : 0);
      const int y0 = std::min(static_cast<int>(y), h >= 2 ? h - 2 : 0);
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = x - x0, fy = y - y0;
      for (int ci = 0; ci < c; ++ci) {
        const double* plane =
            fv.data() + (static_cast<std::ptrdiff_t>(ni) * c + ci) * h * w;
        out[(static_cast<size_t>(ni) * np + pi) * c + ci] =
            (1 - fx) * (1 - fy) * plane[y0 * w + x0] +
            fx * (1 - fy) * plane[y0 * w + x1] +
            (1 - fx) * fy * plane[y1 * w + x0] +
            fx * fy * plane[y1 * w + x1];
      }
    }

  return make_op(
      {n, np, c}, std::move(out), {f, pos}, [n, c, h, w, np](Node& self) {
        Node& pf = *self.parents[0];
        Node& pp = *self.parents[1];
        const auto clampf = [](double v, double lo, double hi) {
          return v < lo ? lo : (v > hi ? hi : v);
        };
        for (int ni = 0; ni < n; ++ni)
          for (int pi = 0; pi < np; ++pi) {
            const double rx = pp.value[(static_cast<size_t>(ni) * np + pi) * 2 + 0];
            const double ry = pp.value[(static_cast<size_t>(ni) * np + pi) * 2 + 1];
            const bool x_interior = rx > 0.0 && rx < w - 1.0;
            const bool y_interior = ry > 0.0 && ry < h - 1.0;
            const double x = clampf(rx, 0.0, w - 1.0);
            const double y = clampf(ry, 0.0, h - 1.0);
            const int x0 = std::min(static_cast<int>(x), w >= 2 ? w - 2 : 0);
            const int y0 = std::min(static_cast<int>(y), h >= 2 ? h - 2 : 0);
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double fx = x - x0, fy = y - y0;
            double gx = 0, gy = 0;
            for (int ci = 0; ci < c; ++ci) {
              const double g =
                  self.grad[(static_cast<size_t>(ni) * np + pi) * c + ci];
              if (g == 0) continue;
              const std::ptrdiff_t base =
                  (static_cast<std::ptrdiff_t>(ni) * c + ci) * h * w;
              if (pf.requires_grad) {
                pf.grad[base + y0 * w + x0] += g * (1 - fx) * (1 - fy);
                pf.grad[base + y0 * w + x1] += g * fx * (1 - fy);
                pf.grad[base + y1 * w + x0] += g * (1 - fx) * fy;
                pf.grad[base + y1 * w + x1] += g * fx * fy;
              }
              if (pp.requires_grad) {
                const double* plane = pf.value.data() + base;
                gx += g * ((plane[y0 * w + x1] - plane[y0 * w + x0]) * (1 - fy) +
                           (plane[y1 * w + x1] - plane[y1 * w + x0]) * fy);
                gy += g * ((plane[y1 * w + x0] - plane[y0 * w + x0]) * (1 - fx) +
                           (plane[y1 * w + x1] - plane[y0 * w + x1]) * fx);
              }
            }
            if (pp.requires_grad) {
              if (x_interior)
                pp.grad[(static_cast<size_t>(ni) * np + pi) * 2 + 0] += gx;
              if (y_interior)
                pp.grad[(static_cast<size_t>(ni) * np + pi) * 2 + 1] += gy;
            }
          }
      });
}

// ---------------------------------------------------------------------------
// Soft-argmax
// ---------------------------------------------------------------------------

namespace {

// Sum of a strided sequence pairing mirrored elements, so that reversing the
// sequence produces the bit-identical sum.
double paired_sum(const double* base, int count, std::ptrdiff_t stride) {
  double s = 0;
  for (int i = 0; i < count / 2; ++i)
    s += base[i * stride] + base[(count - 1 - i) * stride];
  if (count % 2) s += base[(count / 2) * stride];
  return s;
}

// Expectation of centered coordinates sum_i m[i] * (i - (n-1)/2), paired so
// a reversed m yields the exact negation.
double paired_centered_expectation(const double* m, int n) {
  const double center = (n - 1) / 2.0;
  double s = 0;
  for (int i = 0; i < n / 2; ++i)
    s += m[i] * (i - center) + m[n - 1 - i] * ((n - 1 - i) - center);
  // middle element has centered coordinate exactly 0
  return s;
}

// Collapse axis `r` of a row-major array by paired summation; dims shrinks.
void reduce_axis_paired(std::vector<double>& a, std::vector<int>& dims, int r) {
  const int n = dims[static_cast<size_t>(r)];
  std::int64_t inner = 1, outer = 1;
  for (size_t d = static_cast<size_t>(r) + 1; d < dims.size(); ++d) inner *= dims[d];
  for (int d = 0; d < r; ++d) outer *= dims[static_cast<size_t>(d)];
  std::vector<double> out(static_cast<size_t>(outer * inner));
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t t = 0; t < inner; ++t)
      out[static_cast<size_t>(o * inner + t)] =
          paired_sum(&a[static_cast<size_t>(o * n * inner + t)], n, inner);
  a.swap(out);
  dims.erase(dims.begin() + r);
}

// Shared soft-argmax over volumes of rank `axes.size()` per joint. Returns
// per-joint coordinates ordered (x, y, z, ...) = reversed axis order.
Tensor soft_argmax_impl(const Tensor& hm, int rank, bool centered) {
  const Shape& s = hm.shape();
  if (static_cast<int>(s.size()) != rank + 1)
    throw ShapeMismatch("soft_argmax: expected rank " + std::to_string(rank + 1) +
                        " input, got " + shape_str(s));
  const int joints = s[0];
  std::vector<int> dims(s.begin() + 1, s.end());  // e.g. D,H,W
  std::int64_t vol = 1;
  for (int d : dims) vol *= d;

  std::vector<double> probs(static_cast<size_t>(joints) * vol);
  std::vector<double> out(static_cast<size_t>(joints) * rank);

  const auto v = hm.value();
  for (int j = 0; j < joints; ++j) {
    const double* src = v.data() + static_cast<std::ptrdiff_t>(j) * vol;
    double* p = probs.data() + static_cast<std::ptrdiff_t>(j) * vol;
    double mx = src[0];
    for (std::int64_t i = 1; i < vol; ++i) mx = std::max(mx, src[i]);
    for (std::int64_t i = 0; i < vol; ++i) p[i] = std::exp(src[i] - mx);

    // Denominator: collapse axes innermost-first, pairing mirror elements at
    // every level, so any single-axis flip leaves it bit-identical.
    {
      std::vector<double> level(p, p + vol);
      std::vector<int> ldims = dims;
      while (!ldims.empty())
        reduce_axis_paired(level, ldims, static_cast<int>(ldims.size()) - 1);
      const double denom = level[0];
      for (std::int64_t i = 0; i < vol; ++i) p[i] /= denom;
    }

    // Marginal of each axis (paired reduction over the others), then the
    // centered expectation mapped back to voxel coordinates. Outputs are
    // emitted innermost-axis first: (x, y[, z]).
    for (int a = rank - 1; a >= 0; --a) {
      std::vector<double> marg(p, p + vol);
      std::vector<int> mdims = dims;
      for (int r = rank - 1; r >= 0; --r) {
        if (r == a) continue;
        // Axes beyond r are already collapsed, so axis r sits either at the
        // end of mdims (r > a) or at its original position (r < a).
        const int idx = r > a ? static_cast<int>(mdims.size()) - 1 : r;
        reduce_axis_paired(marg, mdims, idx);
      }
      const int n = dims[static_cast<size_t>(a)];
      const double center = (n - 1) / 2.0;
      const double e = paired_centered_expectation(marg.data(), n);
      out[static_cast<size_t>(j) * rank + (rank - 1 - a)] =
          centered ? e : center + e;
    }
  }

  std::function<void(Node&)> bp;
  if (hm.requires_grad()) {
    bp = [joints, dims, vol, rank, centered,
          probs = std::move(probs)](Node& self) {
      Node& p = *self.parents[0];
      for (int j = 0; j < joints; ++j) {
        const double* pj = probs.data() + static_cast<std::ptrdiff_t>(j) * vol;
        // dout_k/dv_i = p_i * (coord_i^k - E[coord^k])
        for (std::int64_t i = 0; i < vol; ++i) {
          std::int64_t rem = i;
          double acc = 0;
          for (int a = rank - 1; a >= 0; --a) {
            const int n = dims[static_cast<size_t>(a)];
            const double coord = static_cast<double>(rem % n);
            rem /= n;
            const int k = rank - 1 - a;
            const double g = self.grad[static_cast<size_t>(j) * rank + k];
            const double expectation =
                self.value[static_cast<size_t>(j) * rank + k] +
                (centered ? (n - 1) / 2.0 : 0.0);
            acc += g * (coord - expectation);
          }
          p.grad[static_cast<size_t>(j) * vol + i] += pj[i] * acc;
        }
      }
    };
  }
  return make_op({joints, rank}, std::move(out), {hm}, std::move(bp));
}

}  // namespace

Tensor soft_argmax_volume(const Tensor& hm) {
  return soft_argmax_impl(hm, 3, false);
}

Tensor soft_argmax_grid(const Tensor& hm) { return soft_argmax_impl(hm, 2, false); }

Tensor soft_argmax_volume_centered(const Tensor& hm) {
  return soft_argmax_impl(hm, 3, true);
}

Tensor soft_argmax_grid_centered(const Tensor& hm) {
  return soft_argmax_impl(hm, 2, true);
}

Tensor project_points(const Tensor& xyz, double fx, double fy, double cx,
                      double cy) {
  const Shape& s = xyz.shape();
  if (s.size() != 2 || s[1] != 3) mismatch("project_points", s, {-1, 3});
  const int n = s[0];
  const auto v = xyz.value();

  std::string behind;
  for (int i = 0; i < n; ++i)
    if (v[static_cast<size_t>(i) * 3 + 2] <= 1e-6) {
      if (!behind.empty()) behind += ",";
      behind += std::to_string(i);
    }
  if (!behind.empty())
    throw BehindCamera("project_points: non-positive depth at indices [" +
                       behind + "]");

  std::vector<double> out(static_cast<size_t>(n) * 2);
  for (int i = 0; i < n; ++i) {
    const double X = v[static_cast<size_t>(i) * 3 + 0];
    const double Y = v[static_cast<size_t>(i) * 3 + 1];
    const double Z = v[static_cast<size_t>(i) * 3 + 2];
    out[static_cast<size_t>(i) * 2 + 0] = fx * X / Z + cx;
    out[static_cast<size_t>(i) * 2 + 1] = fy * Y / Z + cy;
  }
  return make_op({n, 2}, std::move(out), {xyz}, [n, fx, fy](Node& self) {
    Node& p = *self.parents[0];
    for (int i = 0; i < n; ++i) {
      const double X = p.value[static_cast<size_t>(i) * 3 + 0];
      const double Y = p.value[static_cast<size_t>(i) * 3 + 1];
      const double Z = p.value[static_cast<size_t>(i) * 3 + 2];
      const double gx = self.grad[static_cast<size_t>(i) * 2 + 0];
      const double gy = self.grad[static_cast<size_t>(i) * 2 + 1];
      p.grad[static_cast<size_t>(i) * 3 + 0] += gx * fx / Z;
      p.grad[static_cast<size_t>(i) * 3 + 1] += gy * fy / Z;
      p.grad[static_cast<size_t>(i) * 3 + 2] +=
          -(gx * fx * X + gy * fy * Y) / (Z * Z);
    }
  });
}

Tensor affine_points(const Tensor& pts, const geom::Affine2D& t) {
  const Shape& s = pts.shape();
  if (s.size() != 2 || s[1] != 2) mismatch("affine_points", s, {-1, 2});
  const int n = s[0];
  std::vector<double> out(static_cast<size_t>(n) * 2);
  const auto v = pts.value();
  for (int i = 0; i < n; ++i) {
    const double x = v[static_cast<size_t>(i) * 2], y = v[static_cast<size_t>(i) * 2 + 1];
    out[static_cast<size_t>(i) * 2 + 0] = t.m[0] * x + t.m[1] * y + t.m[2];
    out[static_cast<size_t>(i) * 2 + 1] = t.m[3] * x + t.m[4] * y + t.m[5];
  }
  return make_op({n, 2}, std::move(out), {pts}, [n, t](Node& self) {
    Node& p = *self.parents[0];
    for (int i = 0; i < n; ++i) {
      const double gx = self.grad[static_cast<size_t>(i) * 2 + 0];
      const double gy = self.grad[static_cast<size_t>(i) * 2 + 1];
      p.grad[static_cast<size_t>(i) * 2 + 0] += t.m[0] * gx + t.m[3] * gy;
      p.grad[static_cast<size_t>(i) * 2 + 1] += t.m[1] * gx + t.m[4] * gy;
    }
  });
}

}  // namespace iw::ad
