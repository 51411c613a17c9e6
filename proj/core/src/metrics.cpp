#include "iw/metrics.hpp"

#include <cmath>

#include "iw/errors.hpp"

namespace iw::metrics {

using geom::Vec3;

double mpjpe_mm(std::span<const Vec3> pred_joints,
                std::span<const Vec3> gt_joints, int root) {
  if (pred_joints.size() != gt_joints.size() || pred_joints.empty())
    throw ShapeMismatch("mpjpe: " + std::to_string(pred_joints.size()) +
                        " predicted vs " + std::to_string(gt_joints.size()) +
                        " ground-truth joints");
  const Vec3 pr = pred_joints[static_cast<size_t>(root)];
  const Vec3 gr = gt_joints[static_cast<size_t>(root)];
  double acc = 0;
  for (size_t i = 0; i < pred_joints.size(); ++i)
    acc += geom::norm((pred_joints[i] - pr) - (gt_joints[i] - gr));
  return acc / static_cast<double>(pred_joints.size()) * 1000.0;
}

double mpvpe_mm(std::span<const Vec3> pred_verts, const Vec3& pred_root,
                std::span<const Vec3> gt_verts, const Vec3& gt_root) {
  if (pred_verts.size() != gt_verts.size() || pred_verts.empty())
    throw ShapeMismatch("mpvpe: " + std::to_string(pred_verts.size()) +
                        " predicted vs " + std::to_string(gt_verts.size()) +
                        " ground-truth vertices");
  double acc = 0;
  for (size_t i = 0; i < pred_verts.size(); ++i)
    acc += geom::norm((pred_verts[i] - pred_root) - (gt_verts[i] - gt_root));
  return acc / static_cast<double>(pred_verts.size()) * 1000.0;
}

double mrrpe_mm(const Vec3& pred_root_r, const Vec3& pred_root_l,
                const Vec3& gt_root_r, const Vec3& gt_root_l) {
  return geom::norm((pred_root_l - pred_root_r) - (gt_root_l - gt_root_r)) *
         1000.0;
}

InteractionStats interaction_stats(std::span<const synth::SceneRecord> scenes,
                                   std::span<const double> taus) {
  InteractionStats out;
  out.taus.assign(taus.begin(), taus.end());
  out.fraction.assign(taus.size(), 0.0);
  out.scene_count = static_cast<int>(scenes.size());
  if (scenes.empty()) return out;
  for (const auto& s : scenes) {
    const double iou = geom::box_iou(s.box_r, s.box_l);
    for (size_t i = 0; i < taus.size(); ++i)
      if (iou > taus[i]) out.fraction[i] += 1.0;
  }
  for (auto& f : out.fraction) f /= static_cast<double>(scenes.size());
  return out;
}

ScaleStats scale_stats(std::span<const synth::SceneRecord> scenes,
                       ScaleMode mode) {
  ScaleStats out;
  for (const auto& s : scenes) {
    const geom::Box2D boxes[2] = {s.box_r, s.box_l};
    const geom::Box2D ub = crop::union_box(s.box_r, s.box_l);
    for (const auto& b : boxes) {
      const geom::Box2D sq = geom::squarify_box(b);
      const double enclosing =
          mode == ScaleMode::single_crop ? sq.size.x : ub.size.x;
      out.mean_w += sq.size.x / enclosing;
      out.mean_h += sq.size.y / enclosing;
      ++out.hands;
    }
  }
  if (out.hands > 0) {
    out.mean_w /= out.hands;
    out.mean_h /= out.hands;
  }
  return out;
}

}  // namespace iw::metrics
