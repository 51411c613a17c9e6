#include "iw/crop.hpp"

#include <algorithm>

#include "iw/errors.hpp"
#include "iw/ops.hpp"

namespace iw::crop {

using geom::Affine2D;
using geom::Box2D;
using geom::Vec2;

CropSpec prepare_hand_crop(const Box2D& box, bool flip, int target) {
  CropSpec spec;
  spec.source_box = geom::squarify_box(geom::expand_box(box, 2.0));
  spec.target_w = spec.target_h = target;
  spec.flip = flip;

  const Vec2 lo = spec.source_box.min();
  const double scale = target / spec.source_box.size.x;
  Affine2D to_crop = geom::compose_affine(
      Affine2D::scaling(scale, scale), Affine2D::translation(-lo.x, -lo.y));
  if (flip) {
    // Mirror about the crop's pixel centers: x -> (W - 1) - x.
    Affine2D mirror{{-1, 0, static_cast<double>(target - 1), 0, 1, 0}};
    to_crop = geom::compose_affine(mirror, to_crop);
  }
  spec.affine = to_crop;
  return spec;
}

CropSpec union_crop(const Box2D& ubox, int target) {
  CropSpec spec;
  spec.source_box = geom::squarify_box(ubox);
  spec.target_w = spec.target_h = target;
  spec.flip = false;
  spec.kind = PixelSpace::Kind::union_box;
  const Vec2 lo = spec.source_box.min();
  const double scale = target / spec.source_box.size.x;
  spec.affine = geom::compose_affine(Affine2D::scaling(scale, scale),
                                     Affine2D::translation(-lo.x, -lo.y));
  return spec;
}

Pose25D flip_pose_back(const Pose25D& pose) {
  Pose25D out = pose;
  const double w1 = pose.space.width - 1;
  for (auto& p : out.j) p.x = w1 - p.x;
  out.space.flipped = !pose.space.flipped;
  return out;
}

hand::HandParams flip_params_back(const hand::HandParams& params) {
  return hand::mirror_params(params);
}

Box2D union_box(const Box2D& a, const Box2D& b) {
  const Vec2 lo{std::min(a.min().x, b.min().x), std::min(a.min().y, b.min().y)};
  const Vec2 hi{std::max(a.max().x, b.max().x), std::max(a.max().y, b.max().y)};
  return geom::squarify_box(Box2D::from_bounds(lo, hi));
}

Pose25D to_union_space(const Pose25D& pose, const CropSpec& crop,
                       const Box2D& ubox, int union_res) {
  if (!(pose.space == crop.space()))
    throw SpaceMismatch("to_union_space: pose is not in the given crop space");

  const CropSpec uspec = union_crop(ubox, union_res);
  const Affine2D chain =
      geom::compose_affine(uspec.affine, geom::invert_affine(crop.affine));

  Pose25D out;
  out.space = uspec.space();
  for (size_t i = 0; i < pose.j.size(); ++i) {
    const Vec2 xy = geom::apply_affine(chain, {pose.j[i].x, pose.j[i].y});
    out.j[i].x = xy.x;
    out.j[i].y = xy.y;
    out.j[i].z = pose.j[i].z;  // depths are untouched by the 2-D warp
  }
  return out;
}

std::vector<geom::Vec3> TwoHandOutput::combined_left_vertices() const {
  std::vector<geom::Vec3> out(left.vertices.begin(), left.vertices.end());
  for (auto& v : out) v = v + rel_trans;
  return out;
}

std::array<geom::Vec3, hand::kJoints> TwoHandOutput::combined_left_joints()
    const {
  std::array<geom::Vec3, hand::kJoints> out = left.joints;
  for (auto& v : out) v = v + rel_trans;
  return out;
}

TwoHandOutput assemble_output(const hand::HandMesh& mesh_r,
                              const hand::HandMesh& mesh_l,
                              const geom::Vec3& rel_trans) {
  return {mesh_r, mesh_l, rel_trans};
}

std::pair<Box2D, Box2D> decode_boxes(std::span<const double> center_scores,
                                     int h, int w,
                                     const std::array<Vec2, 2>& sizes,
                                     double upscale) {
  if (center_scores.size() != static_cast<size_t>(2 * h * w))
    throw ShapeMismatch("decode_boxes: expected 2x" + std::to_string(h) + "x" +
                        std::to_string(w) + " scores, got " +
                        std::to_string(center_scores.size()) + " values");
  ad::Tensor logits = ad::Tensor::from_data(
      {2, h, w}, std::vector<double>(center_scores.begin(), center_scores.end()));
  ad::Tensor centers = ad::soft_argmax_grid(logits);  // 2 x (x, y) in det px
  const auto c = centers.value();
  auto make_box = [&](int i) {
    return Box2D{{c[static_cast<size_t>(i) * 2 + 0] * upscale,
                  c[static_cast<size_t>(i) * 2 + 1] * upscale},
                 {sizes[static_cast<size_t>(i)].x * upscale,
                  sizes[static_cast<size_t>(i)].y * upscale}};
  };
  return {make_box(0), make_box(1)};
}

}  // namespace iw::crop
