#pragma once

#include <span>

#include "iw/camera.hpp"
#include "iw/geometry.hpp"
#include "iw/tensor.hpp"

namespace iw::losses {

/// Per-term weights for the training objective; all default to 1.
struct LossWeights {
  double box = 1.0;
  double mano = 1.0;
  double joint = 1.0;
  double reltrans = 1.0;
  double weak2d = 1.0;
};

struct LossReport {
  double box_l1 = 0;
  double mano_l1 = 0;
  double joint_l1 = 0;
  double reltrans_l1 = 0;
  double weak2d_l1 = 0;
  double total = 0;

  static LossReport combine(const LossWeights& w, double box, double mano,
                            double joint, double reltrans, double weak2d);
};

/// 2-D supervision of 3-D quantities: the left global translation is
/// g_r + t, both hands' root-relative joints are translated by their
/// globals, projected, mapped into the union space, and compared to the
/// 2-D ground truth with L1. Gradients flow into g_r and t.
///
/// shared_beta marks that both hands were generated with one shape vector,
/// the constraint this supervision scheme relies on; training asserts it.
ad::Tensor weak_supervision_loss(std::span<const geom::Vec3> joints_r_rootrel,
                                 std::span<const geom::Vec3> joints_l_rootrel,
                                 const ad::Tensor& g_r, const ad::Tensor& t,
                                 const Camera& cam,
                                 std::span<const geom::Vec2> gt2d_union_r,
                                 std::span<const geom::Vec2> gt2d_union_l,
                                 const geom::Affine2D& image_to_union,
                                 bool shared_beta);

}  // namespace iw::losses
