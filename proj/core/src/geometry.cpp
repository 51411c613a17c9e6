#include "iw/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "iw/errors.hpp"

namespace iw::geom {

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
double norm(const Vec2& a) { return std::sqrt(a.x * a.x + a.y * a.y); }

Mat3 Mat3::identity() {
  Mat3 m;
  m.a = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  return m;
}

Mat3 Mat3::transpose() const {
  Mat3 t;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
  return t;
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += (*this)(r, k) * o(k, c);
      out(r, c) = s;
    }
  return out;
}

Vec3 Mat3::operator*(const Vec3& v) const {
  return {a[0] * v.x + a[1] * v.y + a[2] * v.z,
          a[3] * v.x + a[4] * v.y + a[5] * v.z,
          a[6] * v.x + a[7] * v.y + a[8] * v.z};
}

double Mat3::det() const {
  return a[0] * (a[4] * a[8] - a[5] * a[7]) -
         a[1] * (a[3] * a[8] - a[5] * a[6]) +
         a[2] * (a[3] * a[7] - a[4] * a[6]);
}

Mat3 axis_angle_to_matrix(const AxisAngle& aa) {
  const Vec3& v = aa.v;
  const double theta2 = dot(v, v);
  const double theta = std::sqrt(theta2);

  // sin(t)/t and (1-cos(t))/t^2, series-expanded near zero.
  double sinc, cosc;
  if (theta < 1e-7) {
    sinc = 1.0 - theta2 / 6.0;
    cosc = 0.5 - theta2 / 24.0;
  } else {
    sinc = std::sin(theta) / theta;
    cosc = (1.0 - std::cos(theta)) / theta2;
  }

  // R = I + sinc * [v]x + cosc * [v]x^2
  Mat3 r = Mat3::identity();
  const double x = v.x, y = v.y, z = v.z;
  r(0, 0) += cosc * (-y * y - z * z);
  r(0, 1) += -sinc * z + cosc * x * y;
  r(0, 2) += sinc * y + cosc * x * z;
  r(1, 0) += sinc * z + cosc * x * y;
  r(1, 1) += cosc * (-x * x - z * z);
  r(1, 2) += -sinc * x + cosc * y * z;
  r(2, 0) += -sinc * y + cosc * x * z;
  r(2, 1) += sinc * x + cosc * y * z;
  r(2, 2) += cosc * (-x * x - y * y);
  return r;
}

AxisAngle matrix_to_axis_angle(const Mat3& r) {
  const double trace = r(0, 0) + r(1, 1) + r(2, 2);
  const double cos_theta = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(cos_theta);

  Vec3 axis{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
  const double axis_norm = norm(axis);

  if (theta < 1e-7) {
    // Near identity: [v]x ~ (R - R^T)/2.
    return {axis * 0.5};
  }
  if (axis_norm < 1e-7) {
    // Angle near pi: recover the axis from the symmetric part.
    Vec3 d{std::sqrt(std::max(0.0, (r(0, 0) + 1.0) / 2.0)),
           std::sqrt(std::max(0.0, (r(1, 1) + 1.0) / 2.0)),
           std::sqrt(std::max(0.0, (r(2, 2) + 1.0) / 2.0))};
    // Fix signs using the largest component.
    if (d.x >= d.y && d.x >= d.z) {
      d.y = std::copysign(d.y, r(0, 1));
      d.z = std::copysign(d.z, r(0, 2));
    } else if (d.y >= d.z) {
      d.x = std::copysign(d.x, r(0, 1));
      d.z = std::copysign(d.z, r(1, 2));
    } else {
      d.x = std::copysign(d.x, r(0, 2));
      d.y = std::copysign(d.y, r(1, 2));
    }
    const double n = norm(d);
    return {d * (theta / (n > 0 ? n : 1.0))};
  }
  return {axis * (theta / axis_norm)};
}

Mat3 rot6d_to_matrix(const Rot6D& r6) {
  const Vec3 a1{r6.a[0], r6.a[1], r6.a[2]};
  const Vec3 a2{r6.a[3], r6.a[4], r6.a[5]};

  const double n1 = norm(a1);
  if (n1 < 1e-8) throw DegenerateInput("rot6d_to_matrix: first column near zero");
  const Vec3 c1 = a1 * (1.0 / n1);

  const Vec3 u2 = a2 - c1 * dot(c1, a2);
  const double n2 = norm(u2);
  if (n2 < 1e-8)
    throw DegenerateInput("rot6d_to_matrix: columns parallel within tolerance");
  const Vec3 c2 = u2 * (1.0 / n2);
  const Vec3 c3 = cross(c1, c2);

  Mat3 r;
  r(0, 0) = c1.x; r(1, 0) = c1.y; r(2, 0) = c1.z;
  r(0, 1) = c2.x; r(1, 1) = c2.y; r(2, 1) = c2.z;
  r(0, 2) = c3.x; r(1, 2) = c3.y; r(2, 2) = c3.z;
  return r;
}

Rot6D matrix_to_rot6d(const Mat3& r) {
  Rot6D out;
  out.a = {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)};
  return out;
}

Vec2 apply_affine(const Affine2D& t, Vec2 p) {
  return {t.m[0] * p.x + t.m[1] * p.y + t.m[2],
          t.m[3] * p.x + t.m[4] * p.y + t.m[5]};
}

Affine2D compose_affine(const Affine2D& a, const Affine2D& b) {
  Affine2D c;
  c.m[0] = a.m[0] * b.m[0] + a.m[1] * b.m[3];
  c.m[1] = a.m[0] * b.m[1] + a.m[1] * b.m[4];
  c.m[2] = a.m[0] * b.m[2] + a.m[1] * b.m[5] + a.m[2];
  c.m[3] = a.m[3] * b.m[0] + a.m[4] * b.m[3];
  c.m[4] = a.m[3] * b.m[1] + a.m[4] * b.m[4];
  c.m[5] = a.m[3] * b.m[2] + a.m[4] * b.m[5] + a.m[5];
  return c;
}

Affine2D invert_affine(const Affine2D& a) {
  const double det = a.m[0] * a.m[4] - a.m[1] * a.m[3];
  if (std::abs(det) <= 1e-12)
    throw DegenerateInput("invert_affine: linear part singular");
  const double inv = 1.0 / det;
  Affine2D r;
  r.m[0] = a.m[4] * inv;
  r.m[1] = -a.m[1] * inv;
  r.m[3] = -a.m[3] * inv;
  r.m[4] = a.m[0] * inv;
  r.m[2] = -(r.m[0] * a.m[2] + r.m[1] * a.m[5]);
  r.m[5] = -(r.m[3] * a.m[2] + r.m[4] * a.m[5]);
  return r;
}

double box_iou(const Box2D& a, const Box2D& b) {
  const Vec2 alo = a.min(), ahi = a.max();
  const Vec2 blo = b.min(), bhi = b.max();
  const double iw = std::min(ahi.x, bhi.x) - std::max(alo.x, blo.x);
  const double ih = std::min(ahi.y, bhi.y) - std::max(alo.y, blo.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.size.x * a.size.y + b.size.x * b.size.y - inter;
  return inter / uni;
}

Box2D expand_box(const Box2D& b, double factor) {
  if (!(factor > 0)) throw InvalidConfig("expand_box: factor must be > 0");
  return {b.center, {b.size.x * factor, b.size.y * factor}};
}

Box2D squarify_box(const Box2D& b) {
  const double side = std::max(b.size.x, b.size.y);
  return {b.center, {side, side}};
}

std::vector<double> bilinear_sample(std::span<const double> grid, int height,
                                    int width, int channels, double x,
                                    double y) {
  if (x < 0.0 || x > width - 1 || y < 0.0 || y > height - 1) {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "bilinear_sample: (%g, %g) outside %dx%d grid", x, y, width,
                  height);
    throw OutOfBounds(buf);
  }
  const int x0 = std::min(static_cast<int>(x), width - 2 >= 0 ? width - 2 : 0);
  const int y0 = std::min(static_cast<int>(y), height - 2 >= 0 ? height - 2 : 0);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0, fy = y - y0;

  std::vector<double> out(static_cast<size_t>(channels));
  const auto at = [&](int yy, int xx, int c) {
    return grid[(static_cast<size_t>(yy) * width + xx) * channels + c];
  };
  for (int c = 0; c < channels; ++c) {
    out[static_cast<size_t>(c)] =
        (1 - fx) * (1 - fy) * at(y0, x0, c) + fx * (1 - fy) * at(y0, x1, c) +
        (1 - fx) * fy * at(y1, x0, c) + fx * fy * at(y1, x1, c);
  }
  return out;
}

}  // namespace iw::geom
