#pragma once

#include <span>
#include <utility>
#include <vector>

#include "iw/geometry.hpp"
#include "iw/hand_model.hpp"
#include "iw/pose.hpp"

namespace iw::crop {

/// A single-hand crop: the prepared source region (the subject's box doubled
/// then squarified), the target resolution, and the affine from
/// original-image pixels to crop pixels (mirroring x when flip is set).
struct CropSpec {
  geom::Box2D source_box;  // prepared region in original-image pixels
  int target_w = 256;
  int target_h = 256;
  bool flip = false;
  geom::Affine2D affine;
  PixelSpace::Kind kind = PixelSpace::Kind::single_hand_crop;

  PixelSpace space() const {
    return {kind, flip, static_cast<double>(target_w),
            static_cast<double>(target_h), source_box};
  }
};

/// Doubles then squarifies the hand box and maps that region onto the
/// target; left hands additionally mirror x (x -> target_w - 1 - x).
CropSpec prepare_hand_crop(const geom::Box2D& box, bool flip, int target = 256);

/// Crop spec for the union space itself (squarified box, no doubling, never
/// flipped).
CropSpec union_crop(const geom::Box2D& ubox, int target = 256);

/// Mirrors x back (x -> (W-1) - x), leaving y and depth untouched, and
/// toggles the space's flip tag. Applying it twice is the identity.
Pose25D flip_pose_back(const Pose25D& pose);

/// Mirrors axis-angle components (negate y, z) and toggles handedness.
hand::HandParams flip_params_back(const hand::HandParams& params);

/// Smallest axis-aligned box containing both, squarified.
geom::Box2D union_box(const geom::Box2D& a, const geom::Box2D& b);

/// Re-expresses a crop-space pose in the union-box space. Depths pass
/// through bit-exactly. Throws SpaceMismatch when the pose is not tagged
/// with this crop's space.
Pose25D to_union_space(const Pose25D& pose, const CropSpec& crop,
                       const geom::Box2D& ubox, int union_res = 256);

/// Two root-relative meshes plus the relative translation from the right
/// wrist to the left wrist.
struct TwoHandOutput {
  hand::HandMesh right;
  hand::HandMesh left;
  geom::Vec3 rel_trans;

  /// Left-hand vertices in the combined frame (right wrist at the origin).
  std::vector<geom::Vec3> combined_left_vertices() const;
  std::array<geom::Vec3, hand::kJoints> combined_left_joints() const;
};

TwoHandOutput assemble_output(const hand::HandMesh& mesh_r,
                              const hand::HandMesh& mesh_l,
                              const geom::Vec3& rel_trans);

/// Decoding of detector outputs: per-hand 2-D center score maps (2 x h x w,
/// right then left) soft-argmaxed to box centers, plus provided box sizes,
/// both expressed in detector pixels and rescaled by `upscale` to
/// original-image pixels.
std::pair<geom::Box2D, geom::Box2D> decode_boxes(
    std::span<const double> center_scores, int h, int w,
    const std::array<geom::Vec2, 2>& sizes, double upscale = 2.0);

}  // namespace iw::crop
