#pragma once

#include <span>
#include <vector>

#include "iw/geometry.hpp"

namespace iw {

/// Pinhole camera: focal lengths and principal point in pixels.
struct Camera {
  double fx = 1500, fy = 1500;
  double cx = 256, cy = 256;
  int width = 512, height = 512;
};

/// (fx x/z + cx, fy y/z + cy). Throws BehindCamera listing the offending
/// indices when any z <= 1e-6.
std::vector<geom::Vec2> project_perspective(std::span<const geom::Vec3> points,
                                            const Camera& cam);

}  // namespace iw
