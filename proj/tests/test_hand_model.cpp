#include "iw/hand_model.hpp"

#include <cmath>
#include <doctest.h>
#include <filesystem>
#include <fstream>

#include "iw/errors.hpp"
#include "iw/ops.hpp"
#include "iw/rng.hpp"
#include "oracles.hpp"

using namespace iw;
using geom::Mat3;
using geom::Vec3;
using hand::HandParams;
using hand::Handedness;

namespace {

HandParams random_params(rng::Rng& rng, Handedness h = Handedness::right,
                         double theta_scale = 0.5, double beta_scale = 2.0) {
  HandParams p;
  p.handedness = h;
  for (auto& v : p.theta)
    v = {rng.uniform(-theta_scale, theta_scale),
         rng.uniform(-theta_scale, theta_scale),
         rng.uniform(-theta_scale, theta_scale)};
  for (auto& b : p.beta) b = rng.uniform(-beta_scale, beta_scale);
  return p;
}

double max_dist(const Vec3& a, const Vec3& b) {
  return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y),
                   std::abs(a.z - b.z)});
}

}  // namespace

TEST_CASE("template structural invariants") {
  for (Handedness h : {Handedness::right, Handedness::left}) {
    const hand::HandTemplate& t = hand::hand_template(h);

    // Skinning rows: nonnegative, sum to 1, at most four entries.
    for (const auto& vw : t.skin) {
      REQUIRE(vw.count >= 1);
      REQUIRE(vw.count <= 4);
      double sum = 0;
      for (int i = 0; i < vw.count; ++i) {
        CHECK(vw.w[static_cast<size_t>(i)] >= 0.0);
        CHECK(vw.bone[static_cast<size_t>(i)] >= 0);
        CHECK(vw.bone[static_cast<size_t>(i)] < hand::kBones);
        sum += vw.w[static_cast<size_t>(i)];
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }

    // Anchor and regressor rows sum to 1.
    for (int k = 0; k < hand::kBones; ++k) {
      double sum = 0;
      for (int v = 0; v < hand::kVerts; ++v)
        sum += t.bone_anchors[static_cast<size_t>(k) * hand::kVerts + v];
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    for (int j = 0; j < hand::kJoints; ++j) {
      double sum = 0;
      for (int v = 0; v < hand::kVerts; ++v)
        sum += t.joint_regressor[static_cast<size_t>(j) * hand::kVerts + v];
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }

    // Parent array forms a tree rooted at the wrist.
    CHECK(t.parent[0] == -1);
    for (int k = 1; k < hand::kBones; ++k) {
      CHECK(t.parent[static_cast<size_t>(k)] >= 0);
      CHECK(t.parent[static_cast<size_t>(k)] < k);
    }

    for (const auto& f : t.faces)
      for (int idx : f) {
        CHECK(idx >= 0);
        CHECK(idx < hand::kVerts);
      }
  }
}

TEST_CASE("shape_blend") {
  const hand::HandTemplate& t = hand::hand_template(Handedness::right);

  std::array<double, 10> zero{};
  const auto rest = hand::shape_blend(t, zero);
  for (int v = 0; v < hand::kVerts; ++v)
    CHECK(max_dist(rest.vertices[static_cast<size_t>(v)],
                   t.vertices[static_cast<size_t>(v)]) == 0.0);

  std::array<double, 10> e0{};
  e0[0] = 1.0;
  const auto shaped = hand::shape_blend(t, e0);
  for (int v = 0; v < hand::kVerts; ++v) {
    const Vec3 expect = t.vertices[static_cast<size_t>(v)] +
                        t.shape_dirs[static_cast<size_t>(v)][0];
    CHECK(max_dist(shaped.vertices[static_cast<size_t>(v)], expect) < 1e-15);
  }

  // Explicit loop-summation oracle.
  rng::Rng rng(21);
  std::array<double, 10> beta;
  for (auto& b : beta) b = rng.uniform(-3, 3);
  const auto got = hand::shape_blend(t, beta);
  for (int v = 0; v < hand::kVerts; ++v) {
    Vec3 expect = t.vertices[static_cast<size_t>(v)];
    for (int i = 0; i < 10; ++i)
      expect = expect +
               t.shape_dirs[static_cast<size_t>(v)][static_cast<size_t>(i)] *
                   beta[static_cast<size_t>(i)];
    CHECK(max_dist(got.vertices[static_cast<size_t>(v)], expect) < 1e-12);
  }
  CHECK_THROWS_AS(hand::shape_blend(t, std::vector<double>(7, 0.0)),
                  ShapeMismatch);
}

TEST_CASE("forward_kinematics") {
  const hand::HandTemplate& t = hand::hand_template(Handedness::right);
  const auto rest = hand::shape_blend(t, std::array<double, 10>{});

  std::array<Vec3, hand::kBones> zero{};
  const auto g0 = hand::forward_kinematics(rest.rest_joints, zero, t.parent);
  for (int k = 0; k < hand::kBones; ++k) {
    CHECK(max_dist(g0[static_cast<size_t>(k)].t,
                   rest.rest_joints[static_cast<size_t>(k)]) < 1e-12);
    CHECK(max_dist({g0[static_cast<size_t>(k)].r(0, 0),
                    g0[static_cast<size_t>(k)].r(1, 1),
                    g0[static_cast<size_t>(k)].r(2, 2)},
                   {1, 1, 1}) == 0.0);
  }

  // Global rotation only: every joint rotates rigidly about the wrist.
  std::array<Vec3, hand::kBones> global{};
  global[0] = {0, 0, M_PI / 2};
  const auto g1 = hand::forward_kinematics(rest.rest_joints, global, t.parent);
  const Mat3 rz = geom::axis_angle_to_matrix({{0, 0, M_PI / 2}});
  const Vec3 wrist = rest.rest_joints[0];
  for (int k = 0; k < hand::kBones; ++k) {
    const Vec3 expect =
        wrist + rz * (rest.rest_joints[static_cast<size_t>(k)] - wrist);
    CHECK(max_dist(g1[static_cast<size_t>(k)].t, expect) < 1e-12);
  }

  // Independent recursive-traversal oracle with homogeneous 4x4 matrices.
  rng::Rng rng(22);
  std::array<Vec3, hand::kBones> theta;
  for (auto& v : theta)
    v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  const auto got = hand::forward_kinematics(rest.rest_joints, theta, t.parent);

  std::array<std::array<double, 16>, hand::kBones> homo;
  for (int k = 0; k < hand::kBones; ++k) {
    const Mat3 r = geom::axis_angle_to_matrix({theta[static_cast<size_t>(k)]});
    const int par = t.parent[static_cast<size_t>(k)];
    const Vec3 off =
        par < 0 ? rest.rest_joints[static_cast<size_t>(k)]
                : rest.rest_joints[static_cast<size_t>(k)] -
                      rest.rest_joints[static_cast<size_t>(par)];
    std::array<double, 16> local{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) local[static_cast<size_t>(4 * i + j)] = r(i, j);
    local[3] = off.x;
    local[7] = off.y;
    local[11] = off.z;
    local[15] = 1;
    if (par < 0) {
      homo[static_cast<size_t>(k)] = local;
    } else {
      const auto& p = homo[static_cast<size_t>(par)];
      std::array<double, 16> acc{};
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          for (int m = 0; m < 4; ++m)
            acc[static_cast<size_t>(4 * i + j)] +=
                p[static_cast<size_t>(4 * i + m)] *
                local[static_cast<size_t>(4 * m + j)];
      homo[static_cast<size_t>(k)] = acc;
    }
    CHECK(std::abs(got[static_cast<size_t>(k)].t.x -
                   homo[static_cast<size_t>(k)][3]) < 1e-10);
    CHECK(std::abs(got[static_cast<size_t>(k)].t.y -
                   homo[static_cast<size_t>(k)][7]) < 1e-10);
    CHECK(std::abs(got[static_cast<size_t>(k)].t.z -
                   homo[static_cast<size_t>(k)][11]) < 1e-10);
  }
}

TEST_CASE("linear_blend_skin") {
  const hand::HandTemplate& t = hand::hand_template(Handedness::right);
  const auto rest = hand::shape_blend(t, std::array<double, 10>{});

  // Identity pose: skinning returns the shaped vertices.
  std::array<Vec3, hand::kBones> zero{};
  const auto g0 = hand::forward_kinematics(rest.rest_joints, zero, t.parent);
  const auto posed0 =
      hand::linear_blend_skin(rest.vertices, g0, rest.rest_joints, t.skin);
  for (int v = 0; v < hand::kVerts; ++v)
    CHECK(max_dist(posed0[static_cast<size_t>(v)],
                   rest.vertices[static_cast<size_t>(v)]) < 1e-12);

  rng::Rng rng(23);
  std::array<Vec3, hand::kBones> theta;
  for (auto& v : theta)
    v = {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)};
  const auto g = hand::forward_kinematics(rest.rest_joints, theta, t.parent);
  const auto posed =
      hand::linear_blend_skin(rest.vertices, g, rest.rest_joints, t.skin);

  // A single-weight vertex moves rigidly with its bone.
  bool found_rigid = false;
  for (int v = 0; v < hand::kVerts; ++v) {
    const auto& vw = t.skin[static_cast<size_t>(v)];
    if (vw.count != 1 || vw.w[0] != 1.0) continue;
    found_rigid = true;
    const int k = vw.bone[0];
    const Vec3 local = rest.vertices[static_cast<size_t>(v)] -
                       rest.rest_joints[static_cast<size_t>(k)];
    const Vec3 expect =
        g[static_cast<size_t>(k)].r * local + g[static_cast<size_t>(k)].t;
    CHECK(max_dist(posed[static_cast<size_t>(v)], expect) < 1e-12);
  }
  CHECK(found_rigid);

  // Dense per-vertex blended-matrix oracle.
  for (int v = 0; v < hand::kVerts; ++v) {
    const auto& vw = t.skin[static_cast<size_t>(v)];
    std::array<double, 12> blend{};  // 3x4 affine accumulator
    for (int i = 0; i < vw.count; ++i) {
      const int k = vw.bone[static_cast<size_t>(i)];
      const double w = vw.w[static_cast<size_t>(i)];
      const auto& gk = g[static_cast<size_t>(k)];
      // Affine acting on world rest coordinates: R * (x - j) + t.
      const Vec3 shift =
          gk.t - gk.r * rest.rest_joints[static_cast<size_t>(k)];
      for (int r = 0; r < 3; ++r)
        for (int cidx = 0; cidx < 3; ++cidx)
          blend[static_cast<size_t>(4 * r + cidx)] += w * gk.r(r, cidx);
      blend[3] += w * shift.x;
      blend[7] += w * shift.y;
      blend[11] += w * shift.z;
    }
    const Vec3 p = rest.vertices[static_cast<size_t>(v)];
    const Vec3 expect{
        blend[0] * p.x + blend[1] * p.y + blend[2] * p.z + blend[3],
        blend[4] * p.x + blend[5] * p.y + blend[6] * p.z + blend[7],
        blend[8] * p.x + blend[9] * p.y + blend[10] * p.z + blend[11]};
    CHECK(max_dist(posed[static_cast<size_t>(v)], expect) < 1e-10);
  }
}

TEST_CASE("hand_forward rest pose and root relativity") {
  HandParams rest_params;
  const hand::HandMesh mesh = hand::hand_forward(rest_params);
  CHECK(geom::norm(mesh.joints[0]) < 1e-9);

  // Rest pose with zero shape reproduces the template up to the (tiny) root
  // shift.
  const hand::HandTemplate& t = hand::hand_template(Handedness::right);
  for (int v = 0; v < hand::kVerts; ++v)
    CHECK(max_dist(mesh.vertices[static_cast<size_t>(v)],
                   t.vertices[static_cast<size_t>(v)]) < 1e-9);

  rng::Rng rng(24);
  for (int rep = 0; rep < 25; ++rep) {
    const auto p = random_params(
        rng, rep % 2 ? Handedness::left : Handedness::right, 1.0, 3.0);
    const auto m = hand::hand_forward(p);
    CHECK(geom::norm(m.joints[0]) < 1e-9);
  }
}

TEST_CASE("hand_forward rigid invariance under global rotation") {
  rng::Rng rng(25);
  const hand::HandMesh rest = hand::hand_forward(HandParams{});
  for (int rep = 0; rep < 10; ++rep) {
    HandParams p;
    p.theta[0] = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const Mat3 r = geom::axis_angle_to_matrix({p.theta[0]});
    const hand::HandMesh m = hand::hand_forward(p);
    for (int v = 0; v < hand::kVerts; ++v)
      CHECK(max_dist(m.vertices[static_cast<size_t>(v)],
                     r * rest.vertices[static_cast<size_t>(v)]) < 1e-9);
    for (int j = 0; j < hand::kJoints; ++j)
      CHECK(max_dist(m.joints[static_cast<size_t>(j)],
                     r * rest.joints[static_cast<size_t>(j)]) < 1e-9);
  }
}

TEST_CASE("left rest mesh is the x-mirror of the right rest mesh") {
  HandParams right;
  HandParams left;
  left.handedness = Handedness::left;
  const auto mr = hand::hand_forward(right);
  const auto ml = hand::hand_forward(left);
  for (int v = 0; v < hand::kVerts; ++v) {
    CHECK(ml.vertices[static_cast<size_t>(v)].x ==
          -mr.vertices[static_cast<size_t>(v)].x);
    CHECK(ml.vertices[static_cast<size_t>(v)].y ==
          mr.vertices[static_cast<size_t>(v)].y);
    CHECK(ml.vertices[static_cast<size_t>(v)].z ==
          mr.vertices[static_cast<size_t>(v)].z);
  }
}

TEST_CASE("mirror consistency across handedness") {
  rng::Rng rng(26);
  for (int rep = 0; rep < 20; ++rep) {
    HandParams left = random_params(rng, Handedness::left, 1.0, 3.0);
    const HandParams mirrored = hand::mirror_params(left);  // right hand
    REQUIRE(mirrored.handedness == Handedness::right);

    const auto ml = hand::hand_forward(left);
    const auto mr = hand::hand_forward(mirrored);
    for (int v = 0; v < hand::kVerts; ++v) {
      CHECK(std::abs(ml.vertices[static_cast<size_t>(v)].x +
                     mr.vertices[static_cast<size_t>(v)].x) < 1e-9);
      CHECK(std::abs(ml.vertices[static_cast<size_t>(v)].y -
                     mr.vertices[static_cast<size_t>(v)].y) < 1e-9);
      CHECK(std::abs(ml.vertices[static_cast<size_t>(v)].z -
                     mr.vertices[static_cast<size_t>(v)].z) < 1e-9);
    }
  }
}

TEST_CASE("hand scale stays near 15 cm across the shape space") {
  // Wrist-to-middle-fingertip (joint 18) length.
  const auto rest = hand::hand_forward(HandParams{});
  const double rest_len = geom::norm(rest.joints[18]);
  CHECK(rest_len == doctest::Approx(0.15).epsilon(0.01));

  rng::Rng rng(27);
  for (int rep = 0; rep < 200; ++rep) {
    HandParams p;
    for (auto& b : p.beta) b = rng.uniform(-3, 3);
    const double len = geom::norm(hand::hand_forward(p).joints[18]);
    CHECK(len > 0.15 * 0.8);
    CHECK(len < 0.15 * 1.2);
  }
}

TEST_CASE("hand_forward_op gradients match finite differences") {
  rng::Rng rng(28);
  const auto p = random_params(rng, Handedness::right, 0.6, 2.0);
  std::vector<double> theta_flat;
  for (const auto& v : p.theta) {
    theta_flat.push_back(v.x);
    theta_flat.push_back(v.y);
    theta_flat.push_back(v.z);
  }
  ad::Tensor theta =
      ad::Tensor::from_data({hand::kBones, 3}, theta_flat, true);
  ad::Tensor beta = ad::Tensor::from_data(
      {10}, std::vector<double>(p.beta.begin(), p.beta.end()), true);

  std::vector<double> w(static_cast<size_t>(hand::kVerts + hand::kJoints) * 3);
  for (auto& v : w) v = rng.uniform(-1, 1);
  ad::Tensor weights =
      ad::Tensor::from_data({hand::kVerts + hand::kJoints, 3}, w);

  auto build = [&]() {
    return ad::sum(ad::mul(
        hand::hand_forward_op(theta, beta, Handedness::right), weights));
  };
  ad::Tensor loss = build();
  ad::backward(loss);
  const auto tg = theta.grad();
  const double h = 1e-5;
  for (int i : {0, 5, 13, 22, 40, 47}) {
    const double saved = theta.value()[static_cast<size_t>(i)];
    theta.mutable_value()[static_cast<size_t>(i)] = saved + h;
    const double up = build().item();
    theta.mutable_value()[static_cast<size_t>(i)] = saved - h;
    const double dn = build().item();
    theta.mutable_value()[static_cast<size_t>(i)] = saved;
    const double fd = (up - dn) / (2 * h);
    CHECK(std::abs(tg[static_cast<size_t>(i)] - fd) <
          1e-4 * std::max({1.0, std::abs(fd)}));
  }
}

TEST_CASE("export_obj format") {
  const auto mesh = hand::hand_forward(HandParams{});
  const auto path = std::filesystem::temp_directory_path() / "iw_hand.obj";
  hand::export_obj(mesh, hand::hand_template(Handedness::right).faces, path);

  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::string content((std::istreambuf_iterator<char>(is)),
                      std::istreambuf_iterator<char>());
  CHECK(content.find("v ") == 0);
  CHECK(content.find("f ") != std::string::npos);
  CHECK(content.find('\r') == std::string::npos);  // LF only
  // One line per vertex and face.
  size_t lines = 0;
  for (char ch : content) lines += ch == '\n';
  CHECK(lines == hand::kVerts +
                     hand::hand_template(Handedness::right).faces.size());
  std::filesystem::remove(path);
}
