#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "iw/camera.hpp"
#include "iw/crop.hpp"
#include "iw/hand_model.hpp"
#include "iw/pose.hpp"

namespace iw::synth {

/// Appearance domain of a scene's renderings. Geometry never depends on it.
/// mocap scenes carry full 3-D ground truth; itw scenes expose only 2-D.
enum class Domain { mocap, itw_A, itw_B };

const char* domain_name(Domain d);
Domain domain_from_name(const std::string& name);

struct SynthConfig {
  Camera camera{};  // fx = fy = 1500 px, principal at center, 512 x 512
  double beta_range = 3.0;
  double depth_min = 0.3, depth_max = 0.8;  // right-wrist depth, meters
  double t_min = 0.03, t_max = 0.30;        // relative-translation magnitude
  double itw_fraction = 0.0;
  double itw_single_hand_prob = 0.8;  // itw bias toward one visible hand
  int max_retries = 100;
  double curl_max = 1.0;          // finger curl bound, radians
  double global_rot_range = 0.5;  // per-axis wrist orientation bound
};

/// A synthetic two-hand scene. Generation parameters plus everything the
/// pipeline derives from them: projections, tight joint boxes, crop-space
/// 2.5-D poses (the left one in its flipped crop space).
struct SceneRecord {
  hand::HandParams params_r, params_l;
  geom::Vec3 g_r;   // camera-frame right-wrist translation, meters
  geom::Vec3 t_gt;  // right wrist -> left wrist, meters
  Camera camera;
  Domain domain = Domain::mocap;

  geom::Box2D box_r, box_l;
  std::array<geom::Vec2, hand::kJoints> joints2d_r, joints2d_l;
  Pose25D pose_r, pose_l;
  bool interacting = false;
  bool visible_r = true, visible_l = true;

  geom::Vec3 g_l() const { return g_r + t_gt; }
  bool has_3d_gt() const { return domain == Domain::mocap; }
};

/// Deterministic per-(seed, index) scene. Throws RetryExhausted when
/// max_retries resampling attempts cannot satisfy the visibility pattern.
SceneRecord sample_scene(std::uint64_t seed, std::uint64_t index,
                         const SynthConfig& cfg);

/// index -> itw assignment for a target fraction: an exact Bresenham split
/// (fraction 0.5 alternates by parity). itw scenes alternate itw_A / itw_B.
bool itw_by_index(std::uint64_t index, double fraction);

std::vector<SceneRecord> generate_dataset(std::uint64_t seed, int count,
                                          const SynthConfig& cfg);

/// Derived crop specs (left one flipped) and ground-truth meshes.
crop::CropSpec crop_of(const SceneRecord& s, hand::Handedness h);
hand::HandMesh gt_mesh(const SceneRecord& s, hand::Handedness h);

/// Recomputes every derived field (projections, boxes, poses, visibility,
/// interaction) from the generation fields. Throws BehindCamera for
/// non-projectable configurations.
void derive_scene(SceneRecord& s);

// ---------------------------------------------------------------------------
// Rasterization (skeleton drawings; geometric stand-ins for photographs)
// ---------------------------------------------------------------------------

struct Raster {
  int w = 0, h = 0;
  static constexpr int channels = 3;
  std::vector<double> px;  // h * w * 3, HWC, values in [0, 1]

  double at(int y, int x, int c) const {
    return px[(static_cast<size_t>(y) * w + x) * channels + c];
  }
};

/// Crop-space rendering of the scene for one hand's crop (flipped for the
/// left hand). Both hands are drawn when they fall inside the crop; the
/// domain controls background, stroke intensity and texture only.
Raster rasterize_observation(const SceneRecord& s, hand::Handedness target,
                             Domain domain);

/// Union-box-space rendering of both hands at an arbitrary resolution.
Raster rasterize_union(const SceneRecord& s, Domain domain, int res);

// ---------------------------------------------------------------------------
// Dataset files: line-delimited text, header "iw-scene/1"
// ---------------------------------------------------------------------------

void write_dataset(std::span<const SceneRecord> scenes,
                   const std::filesystem::path& path);
/// Throws ParseError naming the line and field on malformed input.
std::vector<SceneRecord> read_dataset(const std::filesystem::path& path);

}  // namespace iw::synth
