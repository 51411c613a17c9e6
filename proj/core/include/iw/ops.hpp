#pragma once

#include <span>

#include "iw/geometry.hpp"
#include "iw/tensor.hpp"

namespace iw::ad {

// Elementwise arithmetic. Shapes must match exactly, or one operand's shape
// must be a trailing suffix of the other's; the smaller operand is then
// broadcast over the leading (batch) dimensions. No other broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

/// 2-D matrix product (M x K) . (K x N).
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);

/// Softmax over the last axis, numerically stabilized.
Tensor softmax(const Tensor& a);

/// Same data in creation order under a new shape of equal size.
Tensor reshape(const Tensor& a, Shape shape);

Tensor concat(std::span<const Tensor> parts, int axis);

Tensor slice(const Tensor& a, int axis, int start, int len);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Cross-correlation of N,C,H,W input with O,C,k,k kernels (k odd). Output
/// size (H + 2 pad - k) / stride + 1 must be integral. Optional bias of
/// shape O (pass a default-constructed Tensor for none).
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
              int stride, int padding);

/// Mean absolute difference; subgradient 0 at exact ties.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

/// N,C,H,W -> N,C mean over the spatial dimensions.
Tensor global_avg_pool(const Tensor& x);

/// Bilinear sampling of an N,C,H,W feature map at N,P,2 continuous (x, y)
/// positions, clamped to the map bounds. Returns N,P,C. Gradients flow into
/// the feature map, and into the positions when they require gradients.
Tensor sample_features(const Tensor& f, const Tensor& pos);

/// Differentiable soft-argmax over J,D,H,W volumes (values are logits).
/// Returns J,3 voxel coordinates ordered (x, y, z). Summation is
/// mirror-paired per axis so single-axis flips of the input produce exactly
/// mirrored coordinates.
Tensor soft_argmax_volume(const Tensor& hm);

/// 2-D analogue over J,H,W maps; returns J,2 (x, y).
Tensor soft_argmax_grid(const Tensor& hm);

/// Coordinates relative to the volume center ((n-1)/2 per axis). In this
/// form a single-axis flip of the input negates the matching output column
/// bit-exactly; the uncentered forms above add the center with one final
/// rounding.
Tensor soft_argmax_volume_centered(const Tensor& hm);
Tensor soft_argmax_grid_centered(const Tensor& hm);

/// Perspective projection of N,3 camera-frame points. Throws BehindCamera
/// listing the indices of points with z <= 1e-6.
Tensor project_points(const Tensor& xyz, double fx, double fy, double cx,
                      double cy);

/// Apply a constant 2-D affine transform to N,2 points.
Tensor affine_points(const Tensor& pts, const geom::Affine2D& t);

}  // namespace iw::ad
