#pragma once

#include <span>
#include <vector>

#include "iw/geometry.hpp"
#include "iw/synth.hpp"

namespace iw::metrics {

/// Mean per-joint 3-D error in millimeters after aligning both sets by the
/// translation of their root joint (index `root`).
double mpjpe_mm(std::span<const geom::Vec3> pred_joints,
                std::span<const geom::Vec3> gt_joints, int root = 0);

/// Mean per-vertex error in millimeters after root-joint alignment; the
/// root joint positions are passed alongside the vertex sets.
double mpvpe_mm(std::span<const geom::Vec3> pred_verts,
                const geom::Vec3& pred_root,
                std::span<const geom::Vec3> gt_verts,
                const geom::Vec3& gt_root);

/// || (pred_l - pred_r) - (gt_l - gt_r) || in millimeters.
double mrrpe_mm(const geom::Vec3& pred_root_r, const geom::Vec3& pred_root_l,
                const geom::Vec3& gt_root_r, const geom::Vec3& gt_root_l);

/// Fraction of scenes whose hand boxes overlap with IoU > tau, per tau.
struct InteractionStats {
  std::vector<double> taus;
  std::vector<double> fraction;
  int scene_count = 0;
};
InteractionStats interaction_stats(std::span<const synth::SceneRecord> scenes,
                                   std::span<const double> taus);

/// Mean squarified hand-box extent normalized by the enclosing input region:
/// the hand's own squarified crop box, or the squarified union of the two
/// hand boxes.
enum class ScaleMode { single_crop, two_hand_union };
struct ScaleStats {
  double mean_w = 0, mean_h = 0;
  int hands = 0;
};
ScaleStats scale_stats(std::span<const synth::SceneRecord> scenes,
                       ScaleMode mode);

}  // namespace iw::metrics
