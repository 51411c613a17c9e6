#include <algorithm>
#include <cmath>

#include "iw/synth.hpp"

namespace iw::synth {

namespace {

using geom::Vec2;

// Skeleton edges over the 21 output joints: the bone tree plus tip links.
constexpr int kEdges[20][2] = {
    {0, 1},  {1, 2},  {2, 3},  {3, 16},   // thumb
    {0, 4},  {4, 5},  {5, 6},  {6, 17},   // index
    {0, 7},  {7, 8},  {8, 9},  {9, 18},   // middle
    {0, 10}, {10, 11}, {11, 12}, {12, 19},  // ring
    {0, 13}, {13, 14}, {14, 15}, {15, 20},  // pinky
};

struct DomainStyle {
  double bg;
  double bg_gradient_x, bg_gradient_y;
  double stroke;
  double texture_amp;
  double texture_fx, texture_fy;
  double tint[3];
};

DomainStyle style_of(Domain d) {
  switch (d) {
    case Domain::mocap:
      return {0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, {1.0, 0.97, 0.94}};
    case Domain::itw_A:
      return {0.35, 0.25, 0.0, 0.75, 0.08, 0.143, 0.091, {0.95, 1.0, 0.9}};
    default:  // itw_B
      return {0.60, 0.0, 0.30, 0.50, 0.12, 0.067, 0.21, {0.9, 0.92, 1.0}};
  }
}

double dist_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  double t = len2 > 0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 c = a + ab * t;
  return geom::norm(p - c);
}

void draw_hand(Raster& img, const std::array<Vec2, hand::kJoints>& joints,
               double stroke, const DomainStyle& st) {
  const double line_r = std::max(1.0, img.w / 96.0);
  const double disc_r = std::max(1.8, img.w / 64.0);

  auto add = [&](int y, int x, double v) {
    if (x < 0 || x >= img.w || y < 0 || y >= img.h) return;
    for (int c = 0; c < Raster::channels; ++c) {
      double& px = img.px[(static_cast<size_t>(y) * img.w + x) * 3 + c];
      px = std::min(1.0, std::max(px, v * st.tint[c]));
    }
  };

  for (const auto& e : kEdges) {
    const Vec2 a = joints[static_cast<size_t>(e[0])];
    const Vec2 b = joints[static_cast<size_t>(e[1])];
    const int x0 = static_cast<int>(std::floor(std::min(a.x, b.x) - line_r - 1));
    const int x1 = static_cast<int>(std::ceil(std::max(a.x, b.x) + line_r + 1));
    const int y0 = static_cast<int>(std::floor(std::min(a.y, b.y) - line_r - 1));
    const int y1 = static_cast<int>(std::ceil(std::max(a.y, b.y) + line_r + 1));
    for (int y = std::max(0, y0); y <= std::min(img.h - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(img.w - 1, x1); ++x) {
        const double d = dist_to_segment({x + 0.0, y + 0.0}, a, b);
        const double v = stroke * std::clamp(line_r + 0.5 - d, 0.0, 1.0);
        if (v > 0) add(y, x, v * 0.8);
      }
  }

  // Joint discs, brighter than the strokes with a peak at the joint center.
  for (const auto& jp : joints) {
    const int x0 = static_cast<int>(std::floor(jp.x - disc_r - 1));
    const int y0 = static_cast<int>(std::floor(jp.y - disc_r - 1));
    for (int y = std::max(0, y0); y <= std::min(img.h - 1, y0 + 2 * static_cast<int>(disc_r) + 3); ++y)
      for (int x = std::max(0, x0); x <= std::min(img.w - 1, x0 + 2 * static_cast<int>(disc_r) + 3); ++x) {
        const double dx = x - jp.x, dy = y - jp.y;
        const double d2 = (dx * dx + dy * dy) / (disc_r * disc_r);
        if (d2 < 1.0) add(y, x, stroke * (0.85 + 0.35 * (1.0 - d2)));
      }
  }
}

Raster make_background(int res, const DomainStyle& st) {
  Raster img;
  img.w = img.h = res;
  img.px.assign(static_cast<size_t>(res) * res * Raster::channels, 0.0);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      double v = st.bg + st.bg_gradient_x * (static_cast<double>(x) / res) +
                 st.bg_gradient_y * (static_cast<double>(y) / res);
      v += st.texture_amp *
           (std::sin(x * st.texture_fx) + std::cos(y * st.texture_fy)) * 0.5;
      v = std::clamp(v, 0.0, 1.0);
      for (int c = 0; c < Raster::channels; ++c)
        img.px[(static_cast<size_t>(y) * res + x) * 3 + c] =
            std::clamp(v * st.tint[c], 0.0, 1.0);
    }
  return img;
}

std::array<Vec2, hand::kJoints> map_joints(
    const std::array<Vec2, hand::kJoints>& image_px,
    const geom::Affine2D& affine) {
  std::array<Vec2, hand::kJoints> out;
  for (size_t j = 0; j < out.size(); ++j)
    out[j] = geom::apply_affine(affine, image_px[j]);
  return out;
}

}  // namespace

Raster rasterize_observation(const SceneRecord& s, hand::Handedness target,
                             Domain domain) {
  const DomainStyle st = style_of(domain);
  const crop::CropSpec spec = crop_of(s, target);
  Raster img = make_background(spec.target_w, st);

  const auto tgt_joints = map_joints(
      target == hand::Handedness::right ? s.joints2d_r : s.joints2d_l,
      spec.affine);
  const auto other_joints = map_joints(
      target == hand::Handedness::right ? s.joints2d_l : s.joints2d_r,
      spec.affine);

  // The non-subject hand is drawn first and dimmer; the subject hand on top.
  draw_hand(img, other_joints, st.stroke * 0.6, st);
  draw_hand(img, tgt_joints, st.stroke, st);
  return img;
}

Raster rasterize_union(const SceneRecord& s, Domain domain, int res) {
  const DomainStyle st = style_of(domain);
  const crop::CropSpec spec = crop::union_crop(crop::union_box(s.box_r, s.box_l), res);
  Raster img = make_background(res, st);
  draw_hand(img, map_joints(s.joints2d_r, spec.affine), st.stroke, st);
  draw_hand(img, map_joints(s.joints2d_l, spec.affine), st.stroke * 0.85, st);
  return img;
}

}  // namespace iw::synth
