#include "iw/losses.hpp"

#include <string>

#include "iw/errors.hpp"
#include "iw/ops.hpp"

namespace iw {

std::vector<geom::Vec2> project_perspective(std::span<const geom::Vec3> points,
                                            const Camera& cam) {
  std::string behind;
  for (size_t i = 0; i < points.size(); ++i)
    if (points[i].z <= 1e-6) {
      if (!behind.empty()) behind += ",";
      behind += std::to_string(i);
    }
  if (!behind.empty())
    throw BehindCamera("project_perspective: non-positive depth at indices [" +
                       behind + "]");
  std::vector<geom::Vec2> out(points.size());
  for (size_t i = 0; i < points.size(); ++i)
    out[i] = {cam.fx * points[i].x / points[i].z + cam.cx,
              cam.fy * points[i].y / points[i].z + cam.cy};
  return out;
}

namespace losses {

LossReport LossReport::combine(const LossWeights& w, double box, double mano,
                               double joint, double reltrans, double weak2d) {
  LossReport r;
  r.box_l1 = box;
  r.mano_l1 = mano;
  r.joint_l1 = joint;
  r.reltrans_l1 = reltrans;
  r.weak2d_l1 = weak2d;
  r.total = w.box * box + w.mano * mano + w.joint * joint +
            w.reltrans * reltrans + w.weak2d * weak2d;
  return r;
}

ad::Tensor weak_supervision_loss(std::span<const geom::Vec3> joints_r_rootrel,
                                 std::span<const geom::Vec3> joints_l_rootrel,
                                 const ad::Tensor& g_r, const ad::Tensor& t,
                                 const Camera& cam,
                                 std::span<const geom::Vec2> gt2d_union_r,
                                 std::span<const geom::Vec2> gt2d_union_l,
                                 const geom::Affine2D& image_to_union,
                                 bool shared_beta) {
  if (!shared_beta)
    throw InvalidConfig(
        "weak_supervision_loss: requires hands generated with a shared shape "
        "vector");
  if (g_r.shape() != ad::Shape{3} || t.shape() != ad::Shape{3})
    throw ShapeMismatch("weak_supervision_loss: g_r " +
                        ad::shape_str(g_r.shape()) + " / t " +
                        ad::shape_str(t.shape()) + ", expected [3]");
  if (joints_r_rootrel.size() != gt2d_union_r.size() ||
      joints_l_rootrel.size() != gt2d_union_l.size())
    throw ShapeMismatch("weak_supervision_loss: joint/GT count mismatch");

  auto to_tensor = [](std::span<const geom::Vec3> pts) {
    std::vector<double> data;
    data.reserve(pts.size() * 3);
    for (const auto& p : pts) {
      data.push_back(p.x);
      data.push_back(p.y);
      data.push_back(p.z);
    }
    return ad::Tensor::from_data({static_cast<int>(pts.size()), 3},
                                 std::move(data));
  };
  auto gt_tensor = [](std::span<const geom::Vec2> pts) {
    std::vector<double> data;
    data.reserve(pts.size() * 2);
    for (const auto& p : pts) {
      data.push_back(p.x);
      data.push_back(p.y);
    }
    return ad::Tensor::from_data({static_cast<int>(pts.size()), 2},
                                 std::move(data));
  };

  const ad::Tensor g_l = ad::add(g_r, t);

  // Translate root-relative joints into the camera frame (leading-dim
  // broadcast of the 3-vector), project, and warp into union pixels.
  const ad::Tensor cam_r = ad::add(to_tensor(joints_r_rootrel), g_r);
  const ad::Tensor cam_l = ad::add(to_tensor(joints_l_rootrel), g_l);
  const ad::Tensor px_r =
      ad::project_points(cam_r, cam.fx, cam.fy, cam.cx, cam.cy);
  const ad::Tensor px_l =
      ad::project_points(cam_l, cam.fx, cam.fy, cam.cx, cam.cy);
  const ad::Tensor u_r = ad::affine_points(px_r, image_to_union);
  const ad::Tensor u_l = ad::affine_points(px_l, image_to_union);

  const ad::Tensor loss_r = ad::l1_loss(u_r, gt_tensor(gt2d_union_r));
  const ad::Tensor loss_l = ad::l1_loss(u_l, gt_tensor(gt2d_union_l));
  return ad::scalar_mul(ad::add(loss_r, loss_l), 0.5);
}

}  // namespace losses
}  // namespace iw
