#include "iw/hand_model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dual.hpp"
#include "iw/errors.hpp"

namespace iw::hand {

namespace {

using detail::value_of;

template <class S>
struct V3 {
  S x{}, y{}, z{};
  V3 operator+(const V3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  V3 operator-(const V3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  V3 operator*(double s) const { return {x * s, y * s, z * s}; }
};

template <class S>
struct M3 {
  S a[9];
  V3<S> apply(const V3<S>& v) const {
    return {a[0] * v.x + a[1] * v.y + a[2] * v.z,
            a[3] * v.x + a[4] * v.y + a[5] * v.z,
            a[6] * v.x + a[7] * v.y + a[8] * v.z};
  }
  M3 operator*(const M3& o) const {
    M3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        r.a[3 * i + j] = a[3 * i] * o.a[j] + a[3 * i + 1] * o.a[3 + j] +
                         a[3 * i + 2] * o.a[6 + j];
    return r;
  }
  static M3 identity() {
    M3 r;
    for (int i = 0; i < 9; ++i) r.a[i] = S(0.0);
    r.a[0] = r.a[4] = r.a[8] = S(1.0);
    return r;
  }
};

template <class S>
struct RigidT {
  M3<S> r;
  V3<S> t;
};

template <class S>
M3<S> rodrigues(const V3<S>& v) {
  using std::sqrt; using std::sin; using std::cos;
  using detail::sqrt; using detail::sin; using detail::cos;
  const S theta2 = v.x * v.x + v.y * v.y + v.z * v.z;
  S sinc, cosc;
  if (value_of(theta2) < 1e-14) {  // angle below 1e-7: second-order series
    sinc = S(1.0) - theta2 * (1.0 / 6.0);
    cosc = S(0.5) - theta2 * (1.0 / 24.0);
  } else {
    const S theta = sqrt(theta2);
    sinc = sin(theta) / theta;
    cosc = (S(1.0) - cos(theta)) / theta2;
  }
  M3<S> r = M3<S>::identity();
  r.a[0] += cosc * (S(0.0) - v.y * v.y - v.z * v.z);
  r.a[1] += S(0.0) - sinc * v.z + cosc * (v.x * v.y);
  r.a[2] += sinc * v.y + cosc * (v.x * v.z);
  r.a[3] += sinc * v.z + cosc * (v.x * v.y);
  r.a[4] += cosc * (S(0.0) - v.x * v.x - v.z * v.z);
  r.a[5] += S(0.0) - sinc * v.x + cosc * (v.y * v.z);
  r.a[6] += S(0.0) - sinc * v.y + cosc * (v.x * v.z);
  r.a[7] += sinc * v.x + cosc * (v.y * v.z);
  r.a[8] += cosc * (S(0.0) - v.x * v.x - v.y * v.y);
  return r;
}

template <class S>
M3<S> rot_from_6d(const S* a6) {
  using std::sqrt;
  using detail::sqrt;
  V3<S> a1{a6[0], a6[1], a6[2]};
  V3<S> a2{a6[3], a6[4], a6[5]};
  const S n1s = a1.x * a1.x + a1.y * a1.y + a1.z * a1.z;
  if (value_of(n1s) < 1e-16)
    throw DegenerateInput("rot_from_6d: first column near zero");
  const S n1 = sqrt(n1s);
  const V3<S> c1{a1.x / n1, a1.y / n1, a1.z / n1};
  const S proj = c1.x * a2.x + c1.y * a2.y + c1.z * a2.z;
  const V3<S> u2{a2.x - c1.x * proj, a2.y - c1.y * proj, a2.z - c1.z * proj};
  const S n2s = u2.x * u2.x + u2.y * u2.y + u2.z * u2.z;
  if (value_of(n2s) < 1e-16)
    throw DegenerateInput("rot_from_6d: columns parallel within tolerance");
  const S n2 = sqrt(n2s);
  const V3<S> c2{u2.x / n2, u2.y / n2, u2.z / n2};
  const V3<S> c3{c1.y * c2.z - c1.z * c2.y, c1.z * c2.x - c1.x * c2.z,
                 c1.x * c2.y - c1.y * c2.x};
  M3<S> r;
  r.a[0] = c1.x; r.a[1] = c2.x; r.a[2] = c3.x;
  r.a[3] = c1.y; r.a[4] = c2.y; r.a[5] = c3.y;
  r.a[6] = c1.z; r.a[7] = c2.z; r.a[8] = c3.z;
  return r;
}

// Shared forward pass. Rotations are supplied per bone so the axis-angle and
// 6D front ends stay identical downstream.
template <class S>
void forward_core(const HandTemplate& t, const M3<S>* rotations, const S* beta,
                  V3<S>* out_verts /*kVerts*/, V3<S>* out_joints /*kJoints*/) {
  // Shape blend.
  std::array<V3<S>, kVerts> shaped;
  for (int v = 0; v < kVerts; ++v) {
    const geom::Vec3 base = t.vertices[static_cast<size_t>(v)];
    V3<S> p{S(base.x), S(base.y), S(base.z)};
    for (int i = 0; i < 10; ++i) {
      const geom::Vec3 d = t.shape_dirs[static_cast<size_t>(v)][static_cast<size_t>(i)];
      if (d.x == 0 && d.y == 0 && d.z == 0) continue;
      p.x += beta[i] * d.x;
      p.y += beta[i] * d.y;
      p.z += beta[i] * d.z;
    }
    shaped[static_cast<size_t>(v)] = p;
  }

  // Rest joints from anchors.
  std::array<V3<S>, kBones> rest;
  for (int k = 0; k < kBones; ++k) {
    V3<S> acc{S(0.0), S(0.0), S(0.0)};
    const double* row = &t.bone_anchors[static_cast<size_t>(k) * kVerts];
    for (int v = 0; v < kVerts; ++v) {
      if (row[v] == 0.0) continue;
      acc = acc + shaped[static_cast<size_t>(v)] * row[v];
    }
    rest[static_cast<size_t>(k)] = acc;
  }

  // Forward kinematics.
  std::array<RigidT<S>, kBones> g;
  for (int k = 0; k < kBones; ++k) {
    const int par = t.parent[static_cast<size_t>(k)];
    const V3<S> offset = par < 0 ? rest[static_cast<size_t>(k)]
                                 : rest[static_cast<size_t>(k)] - rest[static_cast<size_t>(par)];
    if (par < 0) {
      g[static_cast<size_t>(k)].r = rotations[k];
      g[static_cast<size_t>(k)].t = offset;
    } else {
      const RigidT<S>& gp = g[static_cast<size_t>(par)];
      g[static_cast<size_t>(k)].r = gp.r * rotations[k];
      g[static_cast<size_t>(k)].t = gp.t + gp.r.apply(offset);
    }
  }

  // Linear blend skinning.
  for (int v = 0; v < kVerts; ++v) {
    const VertexWeights& vw = t.skin[static_cast<size_t>(v)];
    V3<S> acc{S(0.0), S(0.0), S(0.0)};
    for (int i = 0; i < vw.count; ++i) {
      const int k = vw.bone[static_cast<size_t>(i)];
      const RigidT<S>& gk = g[static_cast<size_t>(k)];
      const V3<S> local = shaped[static_cast<size_t>(v)] - rest[static_cast<size_t>(k)];
      acc = acc + (gk.r.apply(local) + gk.t) * vw.w[static_cast<size_t>(i)];
    }
    out_verts[v] = acc;
  }

  // Output joints regressed from posed vertices.
  for (int j = 0; j < kJoints; ++j) {
    V3<S> acc{S(0.0), S(0.0), S(0.0)};
    const double* row = &t.joint_regressor[static_cast<size_t>(j) * kVerts];
    for (int v = 0; v < kVerts; ++v) {
      if (row[v] == 0.0) continue;
      acc = acc + out_verts[v] * row[v];
    }
    out_joints[j] = acc;
  }

  // Root-relative output.
  const V3<S> root = out_joints[0];
  for (int v = 0; v < kVerts; ++v) out_verts[v] = out_verts[v] - root;
  for (int j = 0; j < kJoints; ++j) out_joints[j] = out_joints[j] - root;
}

template <class S>
void forward_aa(const HandTemplate& t, const S* theta /*48*/, const S* beta,
                V3<S>* out_verts, V3<S>* out_joints) {
  std::array<M3<S>, kBones> rot;
  for (int k = 0; k < kBones; ++k)
    rot[static_cast<size_t>(k)] =
        rodrigues(V3<S>{theta[3 * k], theta[3 * k + 1], theta[3 * k + 2]});
  forward_core(t, rot.data(), beta, out_verts, out_joints);
}

const HandTemplate& template_for(const HandTemplate& t, Handedness h) {
  if (t.handedness == h) return t;
  return hand_template(h);
}

}  // namespace

ShapedHand shape_blend(const HandTemplate& t, std::span<const double> beta) {
  if (beta.size() != 10)
    throw ShapeMismatch("shape_blend: beta must have 10 entries, got " +
                        std::to_string(beta.size()));
  ShapedHand out;
  for (int v = 0; v < kVerts; ++v) {
    geom::Vec3 p = t.vertices[static_cast<size_t>(v)];
    for (int i = 0; i < 10; ++i)
      p = p + t.shape_dirs[static_cast<size_t>(v)][static_cast<size_t>(i)] * beta[static_cast<size_t>(i)];
    out.vertices[static_cast<size_t>(v)] = p;
  }
  for (int k = 0; k < kBones; ++k) {
    geom::Vec3 acc{};
    const double* row = &t.bone_anchors[static_cast<size_t>(k) * kVerts];
    for (int v = 0; v < kVerts; ++v)
      if (row[v] != 0.0) acc = acc + out.vertices[static_cast<size_t>(v)] * row[v];
    out.rest_joints[static_cast<size_t>(k)] = acc;
  }
  return out;
}

std::array<RigidTransform, kBones> forward_kinematics(
    const std::array<geom::Vec3, kBones>& rest_joints,
    const std::array<geom::Vec3, kBones>& theta,
    const std::array<int, kBones>& parent) {
  std::array<RigidTransform, kBones> g;
  for (int k = 0; k < kBones; ++k) {
    const geom::Mat3 r = geom::axis_angle_to_matrix({theta[static_cast<size_t>(k)]});
    const int par = parent[static_cast<size_t>(k)];
    const geom::Vec3 offset =
        par < 0 ? rest_joints[static_cast<size_t>(k)]
                : rest_joints[static_cast<size_t>(k)] - rest_joints[static_cast<size_t>(par)];
    if (par < 0) {
      g[static_cast<size_t>(k)].r = r;
      g[static_cast<size_t>(k)].t = offset;
    } else {
      const RigidTransform& gp = g[static_cast<size_t>(par)];
      g[static_cast<size_t>(k)].r = gp.r * r;
      g[static_cast<size_t>(k)].t = gp.t + gp.r * offset;
    }
  }
  return g;
}

std::array<geom::Vec3, kVerts> linear_blend_skin(
    const std::array<geom::Vec3, kVerts>& shaped,
    const std::array<RigidTransform, kBones>& transforms,
    const std::array<geom::Vec3, kBones>& rest_joints,
    const std::array<VertexWeights, kVerts>& skin) {
  std::array<geom::Vec3, kVerts> out;
  for (int v = 0; v < kVerts; ++v) {
    const VertexWeights& vw = skin[static_cast<size_t>(v)];
    geom::Vec3 acc{};
    for (int i = 0; i < vw.count; ++i) {
      const int k = vw.bone[static_cast<size_t>(i)];
      const geom::Vec3 local =
          shaped[static_cast<size_t>(v)] - rest_joints[static_cast<size_t>(k)];
      acc = acc +
            (transforms[static_cast<size_t>(k)].r * local +
             transforms[static_cast<size_t>(k)].t) *
                vw.w[static_cast<size_t>(i)];
    }
    out[static_cast<size_t>(v)] = acc;
  }
  return out;
}

HandMesh hand_forward(const HandTemplate& t, const HandParams& p) {
  const HandTemplate& tm = template_for(t, p.handedness);
  std::array<double, 48> theta;
  for (int k = 0; k < kBones; ++k) {
    theta[static_cast<size_t>(3 * k) + 0] = p.theta[static_cast<size_t>(k)].x;
    theta[static_cast<size_t>(3 * k) + 1] = p.theta[static_cast<size_t>(k)].y;
    theta[static_cast<size_t>(3 * k) + 2] = p.theta[static_cast<size_t>(k)].z;
  }
  std::array<V3<double>, kVerts> verts;
  std::array<V3<double>, kJoints> joints;
  forward_aa<double>(tm, theta.data(), p.beta.data(), verts.data(), joints.data());

  HandMesh mesh;
  for (int v = 0; v < kVerts; ++v)
    mesh.vertices[static_cast<size_t>(v)] = {verts[static_cast<size_t>(v)].x,
                                             verts[static_cast<size_t>(v)].y,
                                             verts[static_cast<size_t>(v)].z};
  for (int j = 0; j < kJoints; ++j)
    mesh.joints[static_cast<size_t>(j)] = {joints[static_cast<size_t>(j)].x,
                                           joints[static_cast<size_t>(j)].y,
                                           joints[static_cast<size_t>(j)].z};
  return mesh;
}

HandMesh hand_forward(const HandParams& p) {
  return hand_forward(hand_template(p.handedness), p);
}

void export_obj(const HandMesh& mesh,
                const std::vector<std::array<int, 3>>& faces,
                const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);  // binary: LF endings everywhere
  if (!os) throw Error("export_obj: cannot open " + path.string());
  char line[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(line, sizeof line, "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
    os << line;
  }
  for (const auto& f : faces) {
    std::snprintf(line, sizeof line, "f %d %d %d\n", f[0] + 1, f[1] + 1,
                  f[2] + 1);
    os << line;
  }
  if (!os) throw Error("export_obj: write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Tape bridge
// ---------------------------------------------------------------------------

namespace {

// Packs dual outputs into a value vector and dense Jacobian, then wires the
// Jacobian-transpose product into the tape.
template <int N>
ad::Tensor finish_op(const std::array<V3<detail::Dual<N>>, kVerts>& verts,
                     const std::array<V3<detail::Dual<N>>, kJoints>& joints,
                     const ad::Tensor& in0, int in0_size, const ad::Tensor& in1) {
  constexpr int rows = kVerts + kJoints;
  std::vector<double> value(static_cast<size_t>(rows) * 3);
  std::vector<double> jac(static_cast<size_t>(rows) * 3 * N);

  auto emit = [&](int row, const V3<detail::Dual<N>>& p) {
    const detail::Dual<N>* comps[3] = {&p.x, &p.y, &p.z};
    for (int c = 0; c < 3; ++c) {
      value[static_cast<size_t>(row) * 3 + c] = comps[c]->v;
      for (int i = 0; i < N; ++i)
        jac[(static_cast<size_t>(row) * 3 + c) * N + i] = comps[c]->d[static_cast<size_t>(i)];
    }
  };
  for (int v = 0; v < kVerts; ++v) emit(v, verts[static_cast<size_t>(v)]);
  for (int j = 0; j < kJoints; ++j) emit(kVerts + j, joints[static_cast<size_t>(j)]);

  return ad::make_op(
      {rows, 3}, std::move(value), {in0, in1},
      [jac = std::move(jac), in0_size](ad::Node& self) {
        ad::Node& p0 = *self.parents[0];
        ad::Node& p1 = *self.parents[1];
        const size_t outs = self.grad.size();
        for (size_t o = 0; o < outs; ++o) {
          const double g = self.grad[o];
          if (g == 0) continue;
          const double* row = &jac[o * N];
          if (p0.requires_grad)
            for (int i = 0; i < in0_size; ++i) p0.grad[static_cast<size_t>(i)] += g * row[i];
          if (p1.requires_grad)
            for (int i = in0_size; i < N; ++i)
              p1.grad[static_cast<size_t>(i - in0_size)] += g * row[i];
        }
      });
}

}  // namespace

ad::Tensor hand_forward_op(const ad::Tensor& theta_aa, const ad::Tensor& beta,
                           Handedness h) {
  if (theta_aa.shape() != ad::Shape{kBones, 3})
    throw ShapeMismatch("hand_forward_op: theta shape " +
                        ad::shape_str(theta_aa.shape()) + ", expected [16,3]");
  if (beta.shape() != ad::Shape{10})
    throw ShapeMismatch("hand_forward_op: beta shape " +
                        ad::shape_str(beta.shape()) + ", expected [10]");
  constexpr int N = 58;
  using D = detail::Dual<N>;
  std::array<D, 48> theta;
  std::array<D, 10> b;
  for (int i = 0; i < 48; ++i) theta[static_cast<size_t>(i)] = D::var(theta_aa.value()[static_cast<size_t>(i)], i);
  for (int i = 0; i < 10; ++i) b[static_cast<size_t>(i)] = D::var(beta.value()[static_cast<size_t>(i)], 48 + i);

  std::array<V3<D>, kVerts> verts;
  std::array<V3<D>, kJoints> joints;
  forward_aa<D>(hand_template(h), theta.data(), b.data(), verts.data(),
                joints.data());
  return finish_op<N>(verts, joints, theta_aa, 48, beta);
}

ad::Tensor hand_forward_6d_op(const ad::Tensor& theta6d, const ad::Tensor& beta,
                              Handedness h) {
  if (theta6d.shape() != ad::Shape{kBones, 6})
    throw ShapeMismatch("hand_forward_6d_op: theta shape " +
                        ad::shape_str(theta6d.shape()) + ", expected [16,6]");
  if (beta.shape() != ad::Shape{10})
    throw ShapeMismatch("hand_forward_6d_op: beta shape " +
                        ad::shape_str(beta.shape()) + ", expected [10]");
  constexpr int N = 106;
  using D = detail::Dual<N>;
  std::array<D, 96> t6;
  std::array<D, 10> b;
  for (int i = 0; i < 96; ++i) t6[static_cast<size_t>(i)] = D::var(theta6d.value()[static_cast<size_t>(i)], i);
  for (int i = 0; i < 10; ++i) b[static_cast<size_t>(i)] = D::var(beta.value()[static_cast<size_t>(i)], 96 + i);

  std::array<M3<D>, kBones> rot;
  for (int k = 0; k < kBones; ++k)
    rot[static_cast<size_t>(k)] = rot_from_6d<D>(&t6[static_cast<size_t>(6 * k)]);

  std::array<V3<D>, kVerts> verts;
  std::array<V3<D>, kJoints> joints;
  forward_core<D>(hand_template(h), rot.data(), b.data(), verts.data(),
                  joints.data());
  return finish_op<N>(verts, joints, theta6d, 96, beta);
}

}  // namespace iw::hand
