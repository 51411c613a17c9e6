#pragma once

#include <array>
#include <cmath>

#include "iw/geometry.hpp"
#include "iw/hand_model.hpp"

namespace iw {

/// Identifies the 2-D pixel space a pose lives in. Single-hand crops are
/// fingerprinted by their source box so poses cannot silently cross between
/// the two hands' crops.
struct PixelSpace {
  enum class Kind { single_hand_crop, union_box };

  Kind kind = Kind::union_box;
  bool flipped = false;     // only single-hand crops of left hands
  double width = 256;       // target resolution in pixels
  double height = 256;
  geom::Box2D source;       // original-image region the space was cut from

  friend bool operator==(const PixelSpace& a, const PixelSpace& b) {
    return a.kind == b.kind && a.flipped == b.flipped && a.width == b.width &&
           a.height == b.height && a.source.center.x == b.source.center.x &&
           a.source.center.y == b.source.center.y &&
           a.source.size.x == b.source.size.x &&
           a.source.size.y == b.source.size.y;
  }
};

/// Per-joint (x, y) in the pixels of a stated space plus root-relative depth
/// in meters. The wrist (joint 0) has depth exactly 0.
struct Pose25D {
  std::array<geom::Vec3, hand::kJoints> j{};
  PixelSpace space;
};

}  // namespace iw
