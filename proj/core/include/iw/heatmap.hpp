#pragma once

#include <filesystem>
#include <vector>

#include "iw/pose.hpp"
#include "iw/tensor.hpp"

namespace iw::heatmap {

struct Dims3 {
  int d = 64, h = 64, w = 64;
};

/// Volumetric Gaussian encoding of a 2.5-D pose. A joint at crop pixel
/// (x, y) and root-relative depth z sits at voxel
///   (x * w / space_w,  y * h / space_h,  (z / z_range + 0.5) * d);
/// blobs for joints outside the depth range clip against the volume.
struct Heatmap3D {
  Dims3 dims;
  double sigma = 2.5;    // voxels
  double z_range = 0.4;  // meters covered by the full depth axis
  PixelSpace space;      // pixel space of the encoded pose
  std::vector<double> values;  // kJoints * d * h * w, row-major (j, d, h, w)
  /// Gaussian-encoded maps hold nonnegative values and decode through their
  /// logarithms (softmax(ln v) is exact sum-normalization); network-produced
  /// maps hold logits and decode directly.
  bool values_are_logits = false;
};

/// Throws InvalidConfig for non-positive sigma or z_range. When
/// sum_normalize is set every joint channel is scaled to unit sum (an
/// alternative input normalization; default off).
Heatmap3D encode_gaussian(const Pose25D& pose, Dims3 dims, double sigma,
                          double z_range, bool sum_normalize = false);

/// 2-D variant without the depth axis: kJoints x h x w.
std::vector<double> encode_gaussian_2d(const Pose25D& pose, int h, int w,
                                       double sigma, bool sum_normalize = false);

/// Softmax-weighted expectation of voxel coordinates (values are logits),
/// mapped back to crop pixels / root-relative depth.
Pose25D soft_argmax_3d(const Heatmap3D& hm);

/// Differentiable decode used inside networks: J,D,H,W logits to J,3 voxel
/// coordinates, then the same affine mapping as soft_argmax_3d.
ad::Tensor soft_argmax_3d_op(const ad::Tensor& logits, Dims3 dims,
                             double z_range, const PixelSpace& space);

/// Affine depth map z -> (z / z_range + 0.5) * d and its exact inverse.
double depth_to_slice(double z, double z_range, int d);
double slice_to_depth(double slice, double z_range, int d);

/// Reverses the x (innermost) axis of every joint channel.
Heatmap3D flip_x(const Heatmap3D& hm);

/// Binary fixture dump: magic "IWHM", header, little-endian fp32 values.
void write_heatmap(const Heatmap3D& hm, const std::filesystem::path& path);
Heatmap3D read_heatmap(const std::filesystem::path& path);

}  // namespace iw::heatmap
