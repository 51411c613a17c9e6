#include "iw/crop.hpp"

#include <cmath>
#include <doctest.h>

#include "iw/camera.hpp"
#include "iw/errors.hpp"
#include "iw/hand_model.hpp"
#include "iw/metrics.hpp"
#include "iw/rng.hpp"

using namespace iw;
using geom::Box2D;
using geom::Vec2;
using geom::Vec3;

namespace {

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

Box2D random_box(rng::Rng& rng) {
  return {{rng.uniform(100, 400), rng.uniform(100, 400)},
          {rng.uniform(20, 120), rng.uniform(20, 120)}};
}

}  // namespace

TEST_CASE("prepare_hand_crop region and scale") {
  const Box2D box{{100, 100}, {50, 50}};
  const crop::CropSpec spec = crop::prepare_hand_crop(box, false);

  CHECK(spec.source_box.size.x == 100.0);  // doubled
  CHECK(spec.source_box.size.y == 100.0);
  CHECK(spec.source_box.center.x == 100.0);
  CHECK(spec.affine.m[0] == doctest::Approx(2.56));  // 256 / 100

  // Region corners land on the crop boundary.
  const Vec2 lo = geom::apply_affine(spec.affine, spec.source_box.min());
  const Vec2 hi = geom::apply_affine(spec.affine, spec.source_box.max());
  CHECK(lo.x == doctest::Approx(0.0));
  CHECK(lo.y == doctest::Approx(0.0));
  CHECK(hi.x == doctest::Approx(256.0));
  CHECK(hi.y == doctest::Approx(256.0));

  // Non-square boxes squarify before mapping.
  const crop::CropSpec rect = crop::prepare_hand_crop({{0, 0}, {10, 40}}, false);
  CHECK(rect.source_box.size.x == 80.0);
  CHECK(rect.source_box.size.y == 80.0);
}

TEST_CASE("prepare_hand_crop flip maps the left edge to x=255") {
  const Box2D box{{100, 100}, {50, 50}};
  const crop::CropSpec spec = crop::prepare_hand_crop(box, true);
  const Vec2 left_edge{50, 100};  // region min x
  CHECK(geom::apply_affine(spec.affine, left_edge).x ==
        doctest::Approx(255.0));

  // Affine then its inverse returns original points.
  rng::Rng rng(41);
  const auto inv = geom::invert_affine(spec.affine);
  for (int i = 0; i < 50; ++i) {
    const Vec2 p{rng.uniform(0, 512), rng.uniform(0, 512)};
    const Vec2 round = geom::apply_affine(inv, geom::apply_affine(spec.affine, p));
    CHECK(std::abs(round.x - p.x) < 1e-9);
    CHECK(std::abs(round.y - p.y) < 1e-9);
  }
}

TEST_CASE("flip_pose_back is an involution") {
  Pose25D pose;
  pose.space = {PixelSpace::Kind::single_hand_crop, true, 256, 256,
                {{100, 100}, {80, 80}}};
  // Dyadic coordinates are exactly representable through the mirror.
  for (int j = 0; j < hand::kJoints; ++j)
    pose.j[static_cast<size_t>(j)] = {j * 0.25 + 3.5, j * 1.5, 0.01 * j};
  pose.j[0].z = 0;

  const Pose25D once = crop::flip_pose_back(pose);
  CHECK(once.j[0].x == 255.0 - 3.5);
  CHECK(once.space.flipped == false);
  const Pose25D twice = crop::flip_pose_back(once);
  CHECK(twice.space.flipped == true);
  for (int j = 0; j < hand::kJoints; ++j) {
    CHECK(twice.j[static_cast<size_t>(j)].x == pose.j[static_cast<size_t>(j)].x);
    CHECK(twice.j[static_cast<size_t>(j)].y == pose.j[static_cast<size_t>(j)].y);
    CHECK(twice.j[static_cast<size_t>(j)].z == pose.j[static_cast<size_t>(j)].z);
  }

  // Boundary: x = 0 maps to 255.
  Pose25D edge = pose;
  edge.j[0].x = 0.0;
  CHECK(crop::flip_pose_back(edge).j[0].x == 255.0);
}

TEST_CASE("flip_params_back mirrors parameters") {
  rng::Rng rng(42);
  hand::HandParams p;
  p.handedness = hand::Handedness::right;
  for (auto& v : p.theta)
    v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  for (auto& b : p.beta) b = rng.uniform(-2, 2);

  const hand::HandParams flipped = crop::flip_params_back(p);
  CHECK(flipped.handedness == hand::Handedness::left);
  for (int k = 0; k < hand::kBones; ++k) {
    CHECK(flipped.theta[static_cast<size_t>(k)].x == p.theta[static_cast<size_t>(k)].x);
    CHECK(flipped.theta[static_cast<size_t>(k)].y == -p.theta[static_cast<size_t>(k)].y);
    CHECK(flipped.theta[static_cast<size_t>(k)].z == -p.theta[static_cast<size_t>(k)].z);
  }

  // Involution is exact (pure negations).
  const hand::HandParams twice = crop::flip_params_back(flipped);
  CHECK(twice.handedness == p.handedness);
  for (int k = 0; k < hand::kBones; ++k)
    CHECK(twice.theta[static_cast<size_t>(k)].y == p.theta[static_cast<size_t>(k)].y);

  // Mesh from flipped-back parameters is the x-mirror of the original mesh.
  const auto mesh = hand::hand_forward(p);
  const auto mesh_f = hand::hand_forward(flipped);
  for (int v = 0; v < hand::kVerts; ++v) {
    CHECK(std::abs(mesh_f.vertices[static_cast<size_t>(v)].x +
                   mesh.vertices[static_cast<size_t>(v)].x) < 1e-9);
    CHECK(std::abs(mesh_f.vertices[static_cast<size_t>(v)].y -
                   mesh.vertices[static_cast<size_t>(v)].y) < 1e-9);
  }
}

TEST_CASE("union_box") {
  const Box2D a{{5, 5}, {10, 10}};
  const Box2D same = crop::union_box(a, a);
  CHECK(same.size.x == 10.0);
  CHECK(same.center.x == 5.0);

  // Spans x in [0,10] and [20,30], y in [0,10] for both.
  const Box2D r{{5, 5}, {10, 10}};
  const Box2D l{{25, 5}, {10, 10}};
  const Box2D u = crop::union_box(r, l);
  CHECK(u.size.x == 30.0);
  CHECK(u.size.y == 30.0);  // squarified
  CHECK(u.center.x == 15.0);
  CHECK(u.center.y == 5.0);

  const Box2D v = crop::union_box(l, r);
  CHECK(v.center.x == u.center.x);
  CHECK(v.size.x == u.size.x);
}

TEST_CASE("to_union_space identity when the crop equals the union region") {
  // Crop region of this box is a 100x100 square at (100, 100); choosing the
  // union box as exactly that region makes the mapping the identity.
  const Box2D box{{100, 100}, {50, 50}};
  const crop::CropSpec spec = crop::prepare_hand_crop(box, false);

  Pose25D pose;
  pose.space = spec.space();
  rng::Rng rng(43);
  for (auto& j : pose.j)
    j = {rng.uniform(0, 255), rng.uniform(0, 255), rng.uniform(-0.1, 0.1)};
  pose.j[0].z = 0;

  const Pose25D out = crop::to_union_space(pose, spec, spec.source_box, 256);
  for (int j = 0; j < hand::kJoints; ++j) {
    CHECK(std::abs(out.j[static_cast<size_t>(j)].x -
                   pose.j[static_cast<size_t>(j)].x) < 1e-9);
    CHECK(std::abs(out.j[static_cast<size_t>(j)].y -
                   pose.j[static_cast<size_t>(j)].y) < 1e-9);
    // Depths pass through bit-exactly.
    CHECK(out.j[static_cast<size_t>(j)].z == pose.j[static_cast<size_t>(j)].z);
  }
  CHECK(out.space.kind == PixelSpace::Kind::union_box);
}

TEST_CASE("to_union_space two-path consistency and space checking") {
  rng::Rng rng(44);
  for (int rep = 0; rep < 100; ++rep) {
    const Box2D box_r = random_box(rng);
    const Box2D box_l = random_box(rng);
    const bool flip = rep % 2 == 1;
    const crop::CropSpec spec = crop::prepare_hand_crop(box_r, flip);
    const Box2D ub = crop::union_box(box_r, box_l);
    const crop::CropSpec uspec = crop::union_crop(ub, 256);

    // Image point -> crop -> union vs image point -> union directly.
    for (int i = 0; i < 10; ++i) {
      const Vec2 img{rng.uniform(0, 512), rng.uniform(0, 512)};
      const Vec2 via_crop = geom::apply_affine(spec.affine, img);

      Pose25D pose;
      pose.space = spec.space();
      pose.j[0] = {via_crop.x, via_crop.y, 0.0};
      const Pose25D out = crop::to_union_space(pose, spec, ub, 256);

      const Vec2 direct = geom::apply_affine(uspec.affine, img);
      CHECK(std::abs(out.j[0].x - direct.x) < 1e-9);
      CHECK(std::abs(out.j[0].y - direct.y) < 1e-9);
    }
  }

  // A pose from one hand's crop cannot enter through another hand's crop.
  const crop::CropSpec spec_r = crop::prepare_hand_crop({{100, 100}, {40, 40}}, false);
  const crop::CropSpec spec_l = crop::prepare_hand_crop({{300, 100}, {40, 40}}, true);
  Pose25D pose;
  pose.space = spec_r.space();
  CHECK_THROWS_AS(
      crop::to_union_space(pose, spec_l, crop::union_box({{100, 100}, {40, 40}},
                                                         {{300, 100}, {40, 40}}),
                           256),
      SpaceMismatch);
}

TEST_CASE("flipped left-hand layout has right-hand chirality") {
  rng::Rng rng(45);
  Camera cam;
  for (int rep = 0; rep < 20; ++rep) {
    hand::HandParams left;
    left.handedness = hand::Handedness::left;
    for (auto& v : left.theta)
      v = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
           rng.uniform(-0.3, 0.3)};
    const auto mesh = hand::hand_forward(left);

    std::vector<Vec3> cam_pts;
    for (const auto& j : mesh.joints)
      cam_pts.push_back(j + Vec3{0, 0, 0.6});
    const auto px = project_perspective(cam_pts, cam);

    // Wrist (0), index root (4), pinky root (13).
    const double img_area = signed_area(px[0], px[4], px[13]);

    Vec2 lo = px[0], hi = px[0];
    for (const auto& p : px) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
    const crop::CropSpec spec =
        crop::prepare_hand_crop(Box2D::from_bounds(lo, hi), true);
    const Vec2 c0 = geom::apply_affine(spec.affine, px[0]);
    const Vec2 c4 = geom::apply_affine(spec.affine, px[4]);
    const Vec2 c13 = geom::apply_affine(spec.affine, px[13]);
    const double crop_area = signed_area(c0, c4, c13);

    CHECK(img_area * crop_area < 0.0);  // orientation flips
  }
}

TEST_CASE("assemble_output") {
  const auto mesh_r = hand::hand_forward(hand::HandParams{});
  hand::HandParams lp;
  lp.handedness = hand::Handedness::left;
  const auto mesh_l = hand::hand_forward(lp);

  const auto zero = crop::assemble_output(mesh_r, mesh_l, {0, 0, 0});
  CHECK(geom::norm(zero.combined_left_joints()[0]) < 1e-12);
  CHECK(geom::norm(zero.right.joints[0]) < 1e-12);

  const auto shifted = crop::assemble_output(mesh_r, mesh_l, {0.1, 0, 0});
  CHECK(shifted.combined_left_joints()[0].x == doctest::Approx(0.1));
  CHECK(shifted.combined_left_vertices()[0].x ==
        doctest::Approx(mesh_l.vertices[0].x + 0.1));

  // With ground-truth meshes, the assembled output's relative-root error is
  // exactly the translation error.
  const Vec3 t{0.12, -0.03, 0.05};
  const Vec3 t_gt{0.10, 0.00, 0.02};
  const auto out = crop::assemble_output(mesh_r, mesh_l, t);
  const double mm = metrics::mrrpe_mm(out.right.joints[0],
                                      out.combined_left_joints()[0],
                                      {0, 0, 0}, t_gt);
  CHECK(mm == doctest::Approx(geom::norm(t - t_gt) * 1000).epsilon(1e-12));
}

TEST_CASE("decode_boxes from center score maps") {
  const int h = 16, w = 12;
  std::vector<double> scores(2 * h * w, 0.0);
  scores[static_cast<size_t>(5 * w + 3)] = 50.0;            // right at (3, 5)
  scores[static_cast<size_t>(h * w + 9 * w + 7)] = 50.0;    // left at (7, 9)
  const std::array<Vec2, 2> sizes = {Vec2{10, 14}, Vec2{8, 6}};

  const auto [br, bl] = crop::decode_boxes(scores, h, w, sizes, 2.0);
  CHECK(br.center.x == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(br.center.y == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(br.size.x == 20.0);
  CHECK(br.size.y == 28.0);
  CHECK(bl.center.x == doctest::Approx(14.0).epsilon(1e-9));
  CHECK(bl.center.y == doctest::Approx(18.0).epsilon(1e-9));

  CHECK_THROWS_AS(crop::decode_boxes(std::vector<double>(7, 0.0), h, w, sizes, 2),
                  ShapeMismatch);
}
