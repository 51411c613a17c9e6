#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace iw::geom {

struct Vec2 {
  double x = 0.0, y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double norm(const Vec3& a);
double norm(const Vec2& a);

/// 3x3 matrix, row-major.
struct Mat3 {
  std::array<double, 9> a{};

  double& operator()(int r, int c) { return a[static_cast<size_t>(3 * r + c)]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(3 * r + c)]; }

  static Mat3 identity();
  Mat3 transpose() const;
  Mat3 operator*(const Mat3& o) const;
  Vec3 operator*(const Vec3& v) const;
  double det() const;
};

/// Rotation in axis-angle form: direction is the axis, magnitude the angle
/// in radians.
struct AxisAngle {
  Vec3 v;
};

/// 6D rotation parameterization: the first two columns of a rotation matrix
/// before orthonormalization, stored column-after-column.
struct Rot6D {
  std::array<double, 6> a{};
};

/// Affine map of the plane, stored as the top two rows of a homogeneous
/// 3x3 matrix (row-major 2x3). Acts on column vectors (x, y, 1).
struct Affine2D {
  std::array<double, 6> m{1, 0, 0, 0, 1, 0};

  static Affine2D identity() { return {}; }
  static Affine2D translation(double dx, double dy) {
    return {{1, 0, dx, 0, 1, dy}};
  }
  static Affine2D scaling(double sx, double sy) {
    return {{sx, 0, 0, 0, sy, 0}};
  }
};

/// Axis-aligned box in center + size form. Width and height are positive.
struct Box2D {
  Vec2 center;
  Vec2 size;

  Vec2 min() const { return {center.x - size.x / 2, center.y - size.y / 2}; }
  Vec2 max() const { return {center.x + size.x / 2, center.y + size.y / 2}; }
  static Box2D from_bounds(Vec2 lo, Vec2 hi) {
    return {{(lo.x + hi.x) / 2, (lo.y + hi.y) / 2}, {hi.x - lo.x, hi.y - lo.y}};
  }
};

// ---------------------------------------------------------------------------
// Rotations
// ---------------------------------------------------------------------------

/// Rodrigues exponential map. Total: switches to a second-order series below
/// angle 1e-7 so the map and its derivatives stay finite at the identity.
Mat3 axis_angle_to_matrix(const AxisAngle& aa);

/// Logarithm map inverse to axis_angle_to_matrix. Angle in [0, pi].
AxisAngle matrix_to_axis_angle(const Mat3& r);

/// Gram-Schmidt orthonormalization of the two encoded columns; third column
/// is their cross product. Throws DegenerateInput when a column collapses or
/// the columns are parallel within tolerance.
Mat3 rot6d_to_matrix(const Rot6D& r6);

/// First two columns of a rotation matrix, the right inverse of
/// rot6d_to_matrix.
Rot6D matrix_to_rot6d(const Mat3& r);

// ---------------------------------------------------------------------------
// Affine transforms
// ---------------------------------------------------------------------------

Vec2 apply_affine(const Affine2D& t, Vec2 p);

/// apply(compose(a, b), p) == apply(a, apply(b, p)).
Affine2D compose_affine(const Affine2D& a, const Affine2D& b);

/// Throws DegenerateInput when the linear part is not invertible.
Affine2D invert_affine(const Affine2D& a);

// ---------------------------------------------------------------------------
// Boxes
// ---------------------------------------------------------------------------

/// Intersection over union of axis-aligned boxes; 0 for disjoint boxes.
double box_iou(const Box2D& a, const Box2D& b);

/// Same center, size scaled by factor (> 0).
Box2D expand_box(const Box2D& b, double factor);

/// Same center, both sides set to max(w, h).
Box2D squarify_box(const Box2D& b);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Four-neighbor bilinear blend over an H x W grid of C-vectors (HWC layout).
/// Exact at integer coordinates. Throws OutOfBounds outside [0, W-1] x
/// [0, H-1]; callers clamp first.
std::vector<double> bilinear_sample(std::span<const double> grid, int height,
                                    int width, int channels, double x,
                                    double y);

}  // namespace iw::geom
