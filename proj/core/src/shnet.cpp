#include "iw/shnet.hpp"

#include <cmath>

#include "iw/errors.hpp"
#include "iw/ops.hpp"
#include "iw/rng.hpp"

namespace iw::shnet {

using geom::Vec2;

void SHNetConfig::validate() const {
  if (obs_res % 32 != 0 || obs_res <= 0)
    throw InvalidConfig("SHNetConfig: obs_res must be a positive multiple of 32");
  if (widths.size() != 5)
    throw InvalidConfig("SHNetConfig: backbone needs five /2 blocks");
  if (depth <= 0 || feat_channels <= 0 || !(z_range > 0))
    throw InvalidConfig("SHNetConfig: depth/feat_channels/z_range");
}

SHNetLite::SHNetLite(const SHNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  rng::Rng rng(seed);
  backbone_ = nn::CompactCNN("shnet.backbone", 3, cfg_.widths, rng);
  const int c = backbone_.out_channels();
  hm_head_ = nn::Conv2dLayer("shnet.hm_head", c, hand::kJoints * cfg_.depth, 1,
                             1, 0, rng);
  reduce_ = nn::Conv2dLayer("shnet.reduce", c, cfg_.feat_channels, 1, 1, 0, rng);

  // Rotation head biased to the 6-D encoding of the identity so untrained
  // outputs decode to valid rotations; shape and global heads start at zero
  // (g biased to a 0.5 m depth).
  std::vector<double> theta_bias(static_cast<size_t>(hand::kBones) * 6, 0.0);
  for (int k = 0; k < hand::kBones; ++k) {
    theta_bias[static_cast<size_t>(k) * 6 + 0] = 1.0;
    theta_bias[static_cast<size_t>(k) * 6 + 4] = 1.0;
  }
  const int joint_feat_dim = hand::kJoints * (cfg_.feat_channels + 3);
  theta_head_ = nn::Linear::zero_init("shnet.theta_head", joint_feat_dim,
                                      hand::kBones * 6, theta_bias);
  beta_head_ = nn::Linear::zero_init("shnet.beta_head", c, 10);
  const double g_bias[3] = {0, 0, 0.5};
  g_head_ = nn::Linear::zero_init("shnet.g_head", c, 3, g_bias);

  backbone_.collect(params_);
  hm_head_.collect(params_);
  reduce_.collect(params_);
  theta_head_.collect(params_);
  beta_head_.collect(params_);
  g_head_.collect(params_);
}

std::vector<SHNetOutput> SHNetLite::forward(const ad::Tensor& obs,
                                            std::span<const PixelSpace> spaces) {
  const ad::Shape& s = obs.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.obs_res || s[3] != cfg_.obs_res)
    throw ShapeMismatch("SHNetLite::forward: observation shape " +
                        ad::shape_str(s) + ", expected [N,3," +
                        std::to_string(cfg_.obs_res) + "," +
                        std::to_string(cfg_.obs_res) + "]");
  const int n = s[0];
  if (static_cast<int>(spaces.size()) != n)
    throw ShapeMismatch("SHNetLite::forward: " + std::to_string(spaces.size()) +
                        " spaces for batch of " + std::to_string(n));

  const ad::Tensor f = backbone_.forward(obs);  // N x C x g x g
  const int grid = f.shape()[2];
  const ad::Tensor logits_all = hm_head_.forward(f);  // N x J*D x g x g
  const ad::Tensor reduced = reduce_.forward(f);      // N x Cf x g x g
  const ad::Tensor pooled = ad::global_avg_pool(f);   // N x C

  const heatmap::Dims3 dims{cfg_.depth, grid, grid};
  const double cell = static_cast<double>(cfg_.obs_res) / grid;

  std::vector<SHNetOutput> outs;
  outs.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    SHNetOutput out;
    const PixelSpace& space = spaces[static_cast<size_t>(i)];

    const ad::Tensor logits_i = ad::reshape(
        ad::slice(logits_all, 0, i, 1), {hand::kJoints, cfg_.depth, grid, grid});
    out.heatmap = logits_i;
    out.pose_px = heatmap::soft_argmax_3d_op(logits_i, dims, cfg_.z_range, space);

    // Joint features at the decoded (x, y), in feature cells; gradients flow
    // through both the map and the positions.
    const ad::Tensor xy =
        ad::scalar_mul(ad::slice(out.pose_px, 1, 0, 2), 1.0 / cell);
    const ad::Tensor fmap_i = ad::slice(reduced, 0, i, 1);
    const ad::Tensor sampled = ad::sample_features(
        fmap_i, ad::reshape(xy, {1, hand::kJoints, 2}));

    // Normalized 2.5-D coordinates joined to the joint features.
    ad::Tensor norm = ad::mul(
        out.pose_px,
        ad::Tensor::from_data({3}, {1.0 / space.width, 1.0 / space.height,
                                    1.0 / cfg_.z_range}));
    norm = ad::add(norm, ad::Tensor::from_data({3}, {0.0, 0.0, 0.5}));
    const ad::Tensor parts[] = {
        ad::reshape(sampled, {1, hand::kJoints * cfg_.feat_channels}),
        ad::reshape(norm, {1, hand::kJoints * 3})};
    const ad::Tensor joint_vec = ad::concat(parts, 1);

    out.theta_6d =
        ad::reshape(theta_head_.forward(joint_vec), {hand::kBones, 6});
    const ad::Tensor pooled_i = ad::slice(pooled, 0, i, 1);
    out.beta = ad::reshape(beta_head_.forward(pooled_i), {10});
    out.g = ad::reshape(g_head_.forward(pooled_i), {3});

    out.pose25d.space = space;
    const auto pv = out.pose_px.value();
    for (int j = 0; j < hand::kJoints; ++j)
      out.pose25d.j[static_cast<size_t>(j)] = {pv[static_cast<size_t>(j) * 3 + 0],
                                               pv[static_cast<size_t>(j) * 3 + 1],
                                               pv[static_cast<size_t>(j) * 3 + 2]};
    outs.push_back(std::move(out));
  }
  return outs;
}

SHNetOutput flip_back(const SHNetOutput& out) {
  SHNetOutput r = out;

  Pose25D pose = out.pose25d;
  const double w1 = pose.space.width - 1;
  for (auto& p : pose.j) p.x = w1 - p.x;
  pose.space.flipped = !pose.space.flipped;
  r.pose25d = pose;

  // pose_px as a tensor view of the mirrored coordinates (constant path).
  std::vector<double> pv(out.pose_px.value().begin(), out.pose_px.value().end());
  for (int j = 0; j < hand::kJoints; ++j)
    pv[static_cast<size_t>(j) * 3] = w1 - pv[static_cast<size_t>(j) * 3];
  r.pose_px = ad::Tensor::from_data({hand::kJoints, 3}, std::move(pv));

  // Conjugate each rotation by the x-mirror: R' = M R M.
  std::vector<double> t6(static_cast<size_t>(hand::kBones) * 6);
  for (int k = 0; k < hand::kBones; ++k) {
    geom::Rot6D r6;
    for (int i = 0; i < 6; ++i)
      r6.a[static_cast<size_t>(i)] =
          out.theta_6d.value()[static_cast<size_t>(k) * 6 + i];
    const geom::Mat3 m = geom::rot6d_to_matrix(r6);
    geom::Mat3 mm = m;
    // M R M with M = diag(-1, 1, 1): negate row 0 and column 0.
    mm(0, 1) = -m(0, 1);
    mm(0, 2) = -m(0, 2);
    mm(1, 0) = -m(1, 0);
    mm(2, 0) = -m(2, 0);
    const geom::Rot6D out6 = geom::matrix_to_rot6d(mm);
    for (int i = 0; i < 6; ++i)
      t6[static_cast<size_t>(k) * 6 + i] = out6.a[static_cast<size_t>(i)];
  }
  r.theta_6d = ad::Tensor::from_data({hand::kBones, 6}, std::move(t6));

  std::vector<double> g(out.g.value().begin(), out.g.value().end());
  g[0] = -g[0];
  r.g = ad::Tensor::from_data({3}, std::move(g));
  return r;
}

hand::HandParams to_hand_params(const SHNetOutput& out, hand::Handedness h) {
  hand::HandParams p;
  p.handedness = h;
  for (int k = 0; k < hand::kBones; ++k) {
    geom::Rot6D r6;
    for (int i = 0; i < 6; ++i)
      r6.a[static_cast<size_t>(i)] =
          out.theta_6d.value()[static_cast<size_t>(k) * 6 + i];
    p.theta[static_cast<size_t>(k)] =
        geom::matrix_to_axis_angle(geom::rot6d_to_matrix(r6)).v;
  }
  std::copy(out.beta.value().begin(), out.beta.value().end(), p.beta.begin());
  return p;
}

std::pair<SHNetOutput, SHNetOutput> run_two_hands(SHNetLite& net,
                                                  const ad::Tensor& obs_r,
                                                  const PixelSpace& space_r,
                                                  const ad::Tensor& obs_l_flipped,
                                                  const PixelSpace& space_l) {
  return run_two_hands_variant(net, net, true, obs_r, space_r, obs_l_flipped,
                               space_l);
}

std::pair<SHNetOutput, SHNetOutput> run_two_hands_variant(
    SHNetLite& net_for_right, SHNetLite& net_for_left, bool flip_left,
    const ad::Tensor& obs_r, const PixelSpace& space_r, const ad::Tensor& obs_l,
    const PixelSpace& space_l) {
  SHNetOutput out_r, out_l;
  if (&net_for_right == &net_for_left) {
    // Shared weights: both observations run as one batch.
    const ad::Tensor parts[] = {obs_r, obs_l};
    const ad::Tensor batch = ad::concat(parts, 0);
    const PixelSpace spaces[] = {space_r, space_l};
    auto outs = net_for_right.forward(batch, spaces);
    out_r = std::move(outs[0]);
    out_l = std::move(outs[1]);
  } else {
    const PixelSpace sr[] = {space_r};
    const PixelSpace sl[] = {space_l};
    out_r = std::move(net_for_right.forward(obs_r, sr)[0]);
    out_l = std::move(net_for_left.forward(obs_l, sl)[0]);
  }
  if (flip_left) out_l = flip_back(out_l);
  return {std::move(out_r), std::move(out_l)};
}

ad::Tensor obs_tensor(const synth::Raster& raster) {
  std::vector<double> chw;
  chw.reserve(static_cast<size_t>(raster.w) * raster.h * synth::Raster::channels);
  for (int c = 0; c < synth::Raster::channels; ++c)
    for (int y = 0; y < raster.h; ++y)
      for (int x = 0; x < raster.w; ++x) chw.push_back(raster.at(y, x, c));
  return ad::Tensor::from_data({1, 3, raster.h, raster.w}, std::move(chw));
}

}  // namespace iw::shnet
