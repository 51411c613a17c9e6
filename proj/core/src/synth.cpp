#include "iw/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iw/errors.hpp"
#include "iw/rng.hpp"

namespace iw::synth {

using geom::Vec2;
using geom::Vec3;

const char* domain_name(Domain d) {
  switch (d) {
    case Domain::mocap: return "mocap";
    case Domain::itw_A: return "itw_A";
    default: return "itw_B";
  }
}

Domain domain_from_name(const std::string& name) {
  if (name == "mocap") return Domain::mocap;
  if (name == "itw_A") return Domain::itw_A;
  if (name == "itw_B") return Domain::itw_B;
  throw ParseError("unknown domain '" + name + "'");
}

bool itw_by_index(std::uint64_t index, double fraction) {
  if (fraction <= 0) return false;
  if (fraction >= 1) return true;
  const double lo = static_cast<double>(index) * fraction;
  const double hi = static_cast<double>(index + 1) * fraction;
  return std::floor(hi) > std::floor(lo);
}

namespace {

// Finger curl bones (everything but the wrist and the thumb chain) rotate
// about -x to close toward the palm; MCP joints also get a small in-plane
// spread about z.
void sample_theta(rng::Rng& rng, const SynthConfig& cfg,
                  hand::HandParams& params) {
  for (auto& v : params.theta) v = Vec3{};
  // Base wrist orientation points the fingers roughly away from the camera
  // (the rest hand is flat in the image plane and would not fit the frame at
  // these depths), with per-axis wobble around it.
  const double half_pi = 1.5707963267948966;
  params.theta[0] = {
      half_pi + rng.uniform(-cfg.global_rot_range, cfg.global_rot_range),
      rng.uniform(-cfg.global_rot_range, cfg.global_rot_range),
      rng.uniform(-cfg.global_rot_range, cfg.global_rot_range)};
  for (int k = 1; k <= 3; ++k)  // thumb
    params.theta[static_cast<size_t>(k)] = {rng.uniform(-0.4, 0.4),
                                            rng.uniform(-0.4, 0.4),
                                            rng.uniform(-0.3, 0.3)};
  for (int f = 0; f < 4; ++f) {
    const int b0 = 4 + 3 * f;
    const double spread = rng.uniform(-0.15, 0.15);
    params.theta[static_cast<size_t>(b0)] = {rng.uniform(-cfg.curl_max, 0.05),
                                             0.0, spread};
    params.theta[static_cast<size_t>(b0) + 1] = {
        rng.uniform(-cfg.curl_max, 0.05), 0.0, 0.0};
    params.theta[static_cast<size_t>(b0) + 2] = {
        rng.uniform(-cfg.curl_max * 0.7, 0.05), 0.0, 0.0};
  }
}

void sample_beta(rng::Rng& rng, double range, std::array<double, 10>& beta) {
  for (auto& b : beta) b = rng.uniform(-range, range);
}

Vec3 sample_unit_vector(rng::Rng& rng) {
  // Uniform direction from z in [-1, 1] and azimuth.
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 6.283185307179586476925286766559);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

bool all_in_frame(const std::array<Vec2, hand::kJoints>& px,
                  const Camera& cam) {
  for (const auto& p : px)
    if (p.x < 0 || p.x > cam.width - 1 || p.y < 0 || p.y > cam.height - 1)
      return false;
  return true;
}

geom::Box2D tight_box(const std::array<Vec2, hand::kJoints>& px) {
  Vec2 lo = px[0], hi = px[0];
  for (const auto& p : px) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
  }
  geom::Box2D b = geom::Box2D::from_bounds(lo, hi);
  b.size.x = std::max(b.size.x, 1e-3);
  b.size.y = std::max(b.size.y, 1e-3);
  return b;
}

Pose25D crop_pose(const std::array<Vec2, hand::kJoints>& px,
                  const hand::HandMesh& mesh, const crop::CropSpec& spec) {
  Pose25D pose;
  pose.space = spec.space();
  for (int j = 0; j < hand::kJoints; ++j) {
    const Vec2 c = geom::apply_affine(spec.affine, px[static_cast<size_t>(j)]);
    pose.j[static_cast<size_t>(j)] = {c.x, c.y, mesh.joints[static_cast<size_t>(j)].z};
  }
  return pose;
}

}  // namespace

crop::CropSpec crop_of(const SceneRecord& s, hand::Handedness h) {
  return h == hand::Handedness::right
             ? crop::prepare_hand_crop(s.box_r, false)
             : crop::prepare_hand_crop(s.box_l, true);
}

hand::HandMesh gt_mesh(const SceneRecord& s, hand::Handedness h) {
  return hand::hand_forward(h == hand::Handedness::right ? s.params_r
                                                         : s.params_l);
}

void derive_scene(SceneRecord& s) {
  const hand::HandMesh mesh_r = gt_mesh(s, hand::Handedness::right);
  const hand::HandMesh mesh_l = gt_mesh(s, hand::Handedness::left);

  std::array<Vec3, hand::kJoints> cam_r, cam_l;
  for (int j = 0; j < hand::kJoints; ++j) {
    cam_r[static_cast<size_t>(j)] = mesh_r.joints[static_cast<size_t>(j)] + s.g_r;
    cam_l[static_cast<size_t>(j)] = mesh_l.joints[static_cast<size_t>(j)] + s.g_l();
  }
  const auto px_r = project_perspective(cam_r, s.camera);
  const auto px_l = project_perspective(cam_l, s.camera);
  std::copy(px_r.begin(), px_r.end(), s.joints2d_r.begin());
  std::copy(px_l.begin(), px_l.end(), s.joints2d_l.begin());

  s.visible_r = all_in_frame(s.joints2d_r, s.camera);
  s.visible_l = all_in_frame(s.joints2d_l, s.camera);

  s.box_r = tight_box(s.joints2d_r);
  s.box_l = tight_box(s.joints2d_l);
  s.interacting = geom::box_iou(s.box_r, s.box_l) > 0.1;

  s.pose_r =
      crop_pose(s.joints2d_r, mesh_r, crop::prepare_hand_crop(s.box_r, false));
  s.pose_l =
      crop_pose(s.joints2d_l, mesh_l, crop::prepare_hand_crop(s.box_l, true));
}

SceneRecord sample_scene(std::uint64_t seed, std::uint64_t index,
                         const SynthConfig& cfg) {
  if (cfg.depth_min <= 0 || cfg.depth_max < cfg.depth_min ||
      cfg.t_min < 0 || cfg.t_max < cfg.t_min)
    throw InvalidConfig("sample_scene: bad depth or translation range");

  rng::Rng rng = rng::Rng::stream(seed, index);
  const bool itw = itw_by_index(index, cfg.itw_fraction);
  // itw scenes alternate between the two appearance domains.
  const auto itw_ordinal = static_cast<std::uint64_t>(
      std::floor(static_cast<double>(index) * cfg.itw_fraction));
  const Domain domain =
      itw ? (itw_ordinal % 2 == 0 ? Domain::itw_A : Domain::itw_B)
          : Domain::mocap;
  const bool want_single = itw && rng.bernoulli(cfg.itw_single_hand_prob);

  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    SceneRecord s;
    s.camera = cfg.camera;
    s.domain = domain;

    s.params_r.handedness = hand::Handedness::right;
    s.params_l.handedness = hand::Handedness::left;
    sample_theta(rng, cfg, s.params_r);
    sample_theta(rng, cfg, s.params_l);
    sample_beta(rng, cfg.beta_range, s.params_r.beta);
    if (itw)
      s.params_l.beta = s.params_r.beta;  // shared shape on weakly labeled data
    else
      sample_beta(rng, cfg.beta_range, s.params_l.beta);

    const double depth = rng.uniform(cfg.depth_min, cfg.depth_max);
    // Keep the wrist projection in the central part of the frame.
    const double px = rng.uniform(0.32, 0.68) * cfg.camera.width;
    const double py = rng.uniform(0.32, 0.68) * cfg.camera.height;
    s.g_r = {(px - cfg.camera.cx) / cfg.camera.fx * depth,
             (py - cfg.camera.cy) / cfg.camera.fy * depth, depth};

    const double mag = rng.uniform(cfg.t_min, cfg.t_max);
    Vec3 dir = sample_unit_vector(rng);
    if (want_single) {
      // Push the left hand sideways out of the frame.
      dir.x = dir.x >= 0 ? std::max(dir.x, 0.8) : std::min(dir.x, -0.8);
      const double n = geom::norm(dir);
      dir = dir * (1.0 / n);
    }
    s.t_gt = dir * mag;
    if (s.g_l().z < 0.15) continue;  // keep the left hand at a sane depth

    try {
      derive_scene(s);
    } catch (const BehindCamera&) {
      continue;
    }
    if (want_single) {
      if (!(s.visible_r && !s.visible_l)) continue;
    } else {
      if (!(s.visible_r && s.visible_l)) continue;
    }
    return s;
  }
  throw RetryExhausted("sample_scene: no valid placement for scene " +
                       std::to_string(index) + " after " +
                       std::to_string(cfg.max_retries) + " attempts");
}

std::vector<SceneRecord> generate_dataset(std::uint64_t seed, int count,
                                          const SynthConfig& cfg) {
  std::vector<SceneRecord> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(sample_scene(seed, static_cast<std::uint64_t>(i), cfg));
  return out;
}

}  // namespace iw::synth
