#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "iw/heatmap.hpp"
#include "iw/nn.hpp"
#include "iw/pose.hpp"
#include "iw/synth.hpp"

namespace iw::shnet {

struct SHNetConfig {
  int obs_res = 256;
  std::vector<int> widths = {8, 16, 24, 32, 64};  // five /2 blocks -> /32
  int feat_channels = 64;  // reduced feature map sampled at joints
  int depth = 8;           // heatmap depth slices
  double z_range = 0.4;

  void validate() const;
};

/// Raw single-hand decoding in the network's own input space (the flipped
/// crop for left hands): joint-heatmap logits, the 2.5-D pose decoded from
/// them, pose and shape parameters (6-D rotations), and the camera-frame
/// global translation of the wrist.
struct SHNetOutput {
  ad::Tensor heatmap;   // kJoints x depth x 8 x 8 logits
  ad::Tensor pose_px;   // kJoints x 3, crop pixels + root-relative depth
  ad::Tensor theta_6d;  // 16 x 6
  ad::Tensor beta;      // 10
  ad::Tensor g;         // 3
  Pose25D pose25d;      // pose_px values with the space tag
};

class SHNetLite {
 public:
  SHNetLite(const SHNetConfig& cfg, std::uint64_t seed);

  /// obs: N x 3 x obs_res x obs_res; spaces: the pixel space of each
  /// observation (used to tag the decoded poses).
  std::vector<SHNetOutput> forward(const ad::Tensor& obs,
                                   std::span<const PixelSpace> spaces);

  std::span<nn::Param> params() { return params_; }
  const SHNetConfig& config() const { return cfg_; }

 private:
  SHNetConfig cfg_;
  nn::CompactCNN backbone_;
  nn::Conv2dLayer hm_head_;   // 1x1 to kJoints * depth channels
  nn::Conv2dLayer reduce_;    // 1x1 channel reduction before joint sampling
  nn::Linear theta_head_, beta_head_, g_head_;
  std::vector<nn::Param> params_;
};

/// Mirrors an output from a flipped left-hand crop back to the unflipped
/// crop: pose x -> (W-1) - x, rotations conjugated by the x-mirror, global
/// translation x negated. The heatmap field stays in the network's input
/// space.
SHNetOutput flip_back(const SHNetOutput& out);

/// Rotations converted to axis-angle form. Handedness is the caller's
/// statement about which hand the parameters describe.
hand::HandParams to_hand_params(const SHNetOutput& out, hand::Handedness h);

/// Batched two-hand path: the right observation and the flipped left
/// observation run through one shared network; the left output is flipped
/// back. Observations must come from prepare_hand_crop-shaped spaces.
std::pair<SHNetOutput, SHNetOutput> run_two_hands(
    SHNetLite& net, const ad::Tensor& obs_r, const PixelSpace& space_r,
    const ad::Tensor& obs_l_flipped, const PixelSpace& space_l);

/// Table-2-style variants: separate networks and/or no left flip. With
/// flip=false the left observation is the unflipped crop and no flip-back
/// is applied.
std::pair<SHNetOutput, SHNetOutput> run_two_hands_variant(
    SHNetLite& net_for_right, SHNetLite& net_for_left, bool flip_left,
    const ad::Tensor& obs_r, const PixelSpace& space_r, const ad::Tensor& obs_l,
    const PixelSpace& space_l);

/// HWC raster -> 1 x 3 x H x W tensor.
ad::Tensor obs_tensor(const synth::Raster& raster);

}  // namespace iw::shnet
