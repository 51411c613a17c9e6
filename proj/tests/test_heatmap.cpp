#include "iw/heatmap.hpp"

#include <cmath>
#include <doctest.h>
#include <filesystem>

#include "iw/errors.hpp"
#include "iw/ops.hpp"
#include "iw/rng.hpp"

using namespace iw;
using heatmap::Dims3;
using heatmap::Heatmap3D;

namespace {

PixelSpace crop_space(double res = 256) {
  return {PixelSpace::Kind::single_hand_crop, false, res, res,
          {{res / 2, res / 2}, {res, res}}};
}

Pose25D random_pose(rng::Rng& rng, double res, double z_half,
                    double margin_frac = 0.15) {
  Pose25D pose;
  pose.space = crop_space(res);
  for (auto& j : pose.j)
    j = {rng.uniform(res * margin_frac, res * (1 - margin_frac)),
         rng.uniform(res * margin_frac, res * (1 - margin_frac)),
         rng.uniform(-z_half, z_half)};
  pose.j[0].z = 0.0;  // wrist depth is root-relative zero
  return pose;
}

}  // namespace

TEST_CASE("depth mapping") {
  CHECK(heatmap::depth_to_slice(0.0, 0.4, 16) == 8.0);
  CHECK(heatmap::depth_to_slice(0.2, 0.4, 16) == 16.0);
  CHECK(heatmap::depth_to_slice(-0.2, 0.4, 16) == 0.0);

  rng::Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    const double z = rng.uniform(-0.25, 0.25);
    const double round =
        heatmap::slice_to_depth(heatmap::depth_to_slice(z, 0.4, 16), 0.4, 16);
    CHECK(std::abs(round - z) < 1e-12);
  }
}

TEST_CASE("encode_gaussian validates configuration") {
  Pose25D pose;
  pose.space = crop_space();
  CHECK_THROWS_AS(heatmap::encode_gaussian(pose, {8, 8, 8}, 0.0, 0.4),
                  InvalidConfig);
  CHECK_THROWS_AS(heatmap::encode_gaussian(pose, {8, 8, 8}, 2.0, -1.0),
                  InvalidConfig);
}

TEST_CASE("encode_gaussian peak and symmetry at a voxel center") {
  // Joint placed exactly on voxel (8, 5, 3): value 1 there, symmetric decay.
  const Dims3 dims{16, 16, 16};
  Pose25D pose;
  pose.space = crop_space(256);
  const double vx = 3, vy = 5, vz = 8;
  pose.j[4] = {vx * 16.0, vy * 16.0,
               heatmap::slice_to_depth(vz, 0.4, 16)};
  const Heatmap3D hm = heatmap::encode_gaussian(pose, dims, 2.5, 0.4);

  auto at = [&](int j, int z, int y, int x) {
    return hm.values[((static_cast<size_t>(j) * 16 + z) * 16 + y) * 16 + x];
  };
  CHECK(at(4, 8, 5, 3) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(at(4, 8, 5, 2) == doctest::Approx(at(4, 8, 5, 4)).epsilon(1e-12));
  CHECK(at(4, 8, 4, 3) == doctest::Approx(at(4, 8, 6, 3)).epsilon(1e-12));
  CHECK(at(4, 7, 5, 3) == doctest::Approx(at(4, 9, 5, 3)).epsilon(1e-12));
  CHECK(at(4, 8, 5, 2) < 1.0);
}

TEST_CASE("encode_gaussian channels are independent") {
  const Dims3 dims{8, 8, 8};
  rng::Rng rng(32);
  Pose25D pose = random_pose(rng, 256, 0.15);
  const Heatmap3D both = heatmap::encode_gaussian(pose, dims, 2.0, 0.4);

  // Moving one joint leaves every other channel bit-identical.
  Pose25D moved = pose;
  moved.j[7] = {10.0, 20.0, 0.05};
  const Heatmap3D after = heatmap::encode_gaussian(moved, dims, 2.0, 0.4);
  const std::int64_t vol = 8 * 8 * 8;
  for (int j = 0; j < hand::kJoints; ++j) {
    if (j == 7) continue;
    for (std::int64_t i = 0; i < vol; ++i)
      CHECK(both.values[static_cast<size_t>(j * vol + i)] ==
            after.values[static_cast<size_t>(j * vol + i)]);
  }
}

TEST_CASE("encode_gaussian matches the scalar formula everywhere") {
  const Dims3 dims{12, 10, 14};
  rng::Rng rng(33);
  const Pose25D pose = random_pose(rng, 256, 0.18);
  const double sigma = 2.2, zr = 0.4;
  const Heatmap3D hm = heatmap::encode_gaussian(pose, dims, sigma, zr);

  for (int j = 0; j < hand::kJoints; ++j) {
    const double jx = pose.j[static_cast<size_t>(j)].x * dims.w / 256.0;
    const double jy = pose.j[static_cast<size_t>(j)].y * dims.h / 256.0;
    const double jz = (pose.j[static_cast<size_t>(j)].z / zr + 0.5) * dims.d;
    for (int z = 0; z < dims.d; ++z)
      for (int y = 0; y < dims.h; ++y)
        for (int x = 0; x < dims.w; ++x) {
          const double d2 = (x - jx) * (x - jx) + (y - jy) * (y - jy) +
                            (z - jz) * (z - jz);
          const double expect = std::exp(-d2 / (2 * sigma * sigma));
          const double got =
              hm.values[((static_cast<size_t>(j) * dims.d + z) * dims.h + y) *
                            dims.w +
                        x];
          CHECK(std::abs(got - expect) < 1e-12);
        }
  }
}

TEST_CASE("sum normalization flag") {
  rng::Rng rng(34);
  const Pose25D pose = random_pose(rng, 256, 0.1);
  const Heatmap3D hm =
      heatmap::encode_gaussian(pose, {16, 16, 16}, 2.5, 0.4, true);
  const std::int64_t vol = 16 * 16 * 16;
  for (int j = 0; j < hand::kJoints; ++j) {
    double sum = 0;
    for (std::int64_t i = 0; i < vol; ++i)
      sum += hm.values[static_cast<size_t>(j * vol + i)];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("soft_argmax one-hot and uniform volumes") {
  // One-hot (scaled x50 so softmax saturates) decodes to that voxel exactly.
  ad::Tensor hot = ad::Tensor::zeros({1, 8, 8, 8});
  const int d = 2, y = 5, x = 6;
  hot.mutable_value()[static_cast<size_t>((d * 8 + y) * 8 + x)] = 50.0;
  const ad::Tensor vox_t = ad::soft_argmax_volume(hot);
  const auto vox = vox_t.value();
  CHECK(vox[0] == doctest::Approx(double(x)).epsilon(1e-12));
  CHECK(vox[1] == doctest::Approx(double(y)).epsilon(1e-12));
  CHECK(vox[2] == doctest::Approx(double(d)).epsilon(1e-12));

  // Uniform volume decodes to the exact center.
  const auto center = ad::soft_argmax_volume(ad::Tensor::zeros({1, 8, 8, 8}));
  CHECK(center.value()[0] == 3.5);
  CHECK(center.value()[1] == 3.5);
  CHECK(center.value()[2] == 3.5);

  const auto c2 = ad::soft_argmax_grid(ad::Tensor::zeros({1, 5, 9}));
  CHECK(c2.value()[0] == 4.0);
  CHECK(c2.value()[1] == 2.0);
}

TEST_CASE("soft_argmax 2d one-hot and blob round trip") {
  ad::Tensor hot = ad::Tensor::zeros({1, 16, 16});
  hot.mutable_value()[static_cast<size_t>(11 * 16 + 4)] = 50.0;
  const ad::Tensor xy_t = ad::soft_argmax_grid(hot);
  const auto xy = xy_t.value();
  CHECK(xy[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(xy[1] == doctest::Approx(11.0).epsilon(1e-12));

  rng::Rng rng(35);
  for (int rep = 0; rep < 10; ++rep) {
    Pose25D pose = random_pose(rng, 256, 0.0, 0.25);
    const auto planes = heatmap::encode_gaussian_2d(pose, 16, 16, 2.0);
    // Blob values decode through their logarithms (exact normalization).
    std::vector<double> logit_vals(planes.size());
    for (size_t i = 0; i < planes.size(); ++i)
      logit_vals[i] = planes[i] > 0 ? std::log(planes[i]) : -745.0;
    ad::Tensor logits = ad::Tensor::from_data({hand::kJoints, 16, 16},
                                              std::move(logit_vals));
    const ad::Tensor decoded_t = ad::soft_argmax_grid(logits);
    const auto decoded = decoded_t.value();
    for (int j = 0; j < hand::kJoints; ++j) {
      const double jx = pose.j[static_cast<size_t>(j)].x * 16 / 256.0;
      const double jy = pose.j[static_cast<size_t>(j)].y * 16 / 256.0;
      CHECK(std::abs(decoded[static_cast<size_t>(j) * 2 + 0] - jx) < 0.1);
      CHECK(std::abs(decoded[static_cast<size_t>(j) * 2 + 1] - jy) < 0.1);
    }
  }
}

TEST_CASE("codec round trip at multiple sizes and widths") {
  rng::Rng rng(36);
  for (const int dim : {16, 32}) {
    for (const double sigma : {1.5, 2.5, 3.0}) {
      const Pose25D pose = random_pose(rng, 256, 0.12, 0.3);
      const Heatmap3D hm =
          heatmap::encode_gaussian(pose, {dim, dim, dim}, sigma, 0.4);
      const Pose25D out = heatmap::soft_argmax_3d(hm);
      for (int j = 0; j < hand::kJoints; ++j) {
        const double tol_px = 0.1 * 256.0 / dim;
        CHECK(std::abs(out.j[static_cast<size_t>(j)].x -
                       pose.j[static_cast<size_t>(j)].x) < tol_px);
        CHECK(std::abs(out.j[static_cast<size_t>(j)].y -
                       pose.j[static_cast<size_t>(j)].y) < tol_px);
        CHECK(std::abs(out.j[static_cast<size_t>(j)].z -
                       pose.j[static_cast<size_t>(j)].z) < 0.1 * 0.4 / dim);
      }
    }
  }
}

TEST_CASE("soft_argmax flip equivariance is exact in centered form") {
  rng::Rng rng(37);
  for (int rep = 0; rep < 8; ++rep) {
    std::vector<double> vals(static_cast<size_t>(2 * 6 * 5 * 4));
    for (auto& v : vals) v = rng.normal() * 1.5;
    ad::Tensor hm = ad::Tensor::from_data({2, 6, 5, 4}, vals);

    // x-flip (innermost axis).
    std::vector<double> flipped(vals.size());
    for (size_t r = 0; r < vals.size() / 4; ++r)
      for (int x = 0; x < 4; ++x)
        flipped[r * 4 + static_cast<size_t>(x)] = vals[r * 4 + static_cast<size_t>(3 - x)];
    ad::Tensor hm_flipped = ad::Tensor::from_data({2, 6, 5, 4}, flipped);

    const ad::Tensor at = ad::soft_argmax_volume_centered(hm);
    const ad::Tensor bt = ad::soft_argmax_volume_centered(hm_flipped);
    const auto a = at.value();
    const auto b = bt.value();
    for (int j = 0; j < 2; ++j) {
      CHECK(b[static_cast<size_t>(j) * 3 + 0] ==
            -a[static_cast<size_t>(j) * 3 + 0]);  // bit-exact negation
      CHECK(b[static_cast<size_t>(j) * 3 + 1] ==
            a[static_cast<size_t>(j) * 3 + 1]);
      CHECK(b[static_cast<size_t>(j) * 3 + 2] ==
            a[static_cast<size_t>(j) * 3 + 2]);
    }

    // y-flip.
    std::vector<double> yflip(vals.size());
    for (int j = 0; j < 2; ++j)
      for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 5; ++y)
          for (int x = 0; x < 4; ++x)
            yflip[((static_cast<size_t>(j) * 6 + z) * 5 + y) * 4 + x] =
                vals[((static_cast<size_t>(j) * 6 + z) * 5 + (4 - y)) * 4 + x];
    const ad::Tensor ct = ad::soft_argmax_volume_centered(
        ad::Tensor::from_data({2, 6, 5, 4}, yflip));
    const auto c = ct.value();
    for (int j = 0; j < 2; ++j) {
      CHECK(c[static_cast<size_t>(j) * 3 + 0] == a[static_cast<size_t>(j) * 3 + 0]);
      CHECK(c[static_cast<size_t>(j) * 3 + 1] == -a[static_cast<size_t>(j) * 3 + 1]);
      CHECK(c[static_cast<size_t>(j) * 3 + 2] == a[static_cast<size_t>(j) * 3 + 2]);
    }

    // The uncentered convenience form agrees to the final rounding.
    const ad::Tensor ut = ad::soft_argmax_volume(hm);
    const ad::Tensor uft = ad::soft_argmax_volume(hm_flipped);
    const auto u = ut.value();
    const auto uf = uft.value();
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(uf[static_cast<size_t>(j) * 3] -
                     (3.0 - u[static_cast<size_t>(j) * 3])) < 1e-12);
  }
}

TEST_CASE("encoding is translation equivariant by whole voxels") {
  // 256-pixel space over 16 voxels: one voxel is exactly 16 pixels.
  Pose25D pose;
  pose.space = crop_space(256);
  for (int j = 0; j < hand::kJoints; ++j)
    pose.j[static_cast<size_t>(j)] = {16.0 * (3 + (j % 5)), 16.0 * (4 + (j % 4)),
                                      0.0};
  Pose25D shifted = pose;
  for (auto& j : shifted.j) j.x += 16.0;

  const Heatmap3D a = heatmap::encode_gaussian(pose, {16, 16, 16}, 2.5, 0.4);
  const Heatmap3D b = heatmap::encode_gaussian(shifted, {16, 16, 16}, 2.5, 0.4);
  for (int j = 0; j < hand::kJoints; ++j)
    for (int z = 0; z < 16; ++z)
      for (int y = 0; y < 16; ++y)
        for (int x = 1; x < 16; ++x) {
          const size_t idx_b =
              ((static_cast<size_t>(j) * 16 + z) * 16 + y) * 16 + x;
          const size_t idx_a =
              ((static_cast<size_t>(j) * 16 + z) * 16 + y) * 16 + (x - 1);
          CHECK(b.values[idx_b] == a.values[idx_a]);
        }
}

TEST_CASE("soft_argmax gradients against finite differences") {
  rng::Rng rng(38);
  std::vector<double> vals(static_cast<size_t>(1 * 4 * 4 * 4));
  for (auto& v : vals) v = rng.normal();
  ad::Tensor hm = ad::Tensor::from_data({1, 4, 4, 4}, vals, true);
  std::vector<double> w{0.3, -0.7, 1.1};
  ad::Tensor weights = ad::Tensor::from_data({1, 3}, w);

  auto build = [&]() {
    return ad::sum(ad::mul(ad::soft_argmax_volume(hm), weights));
  };
  ad::Tensor loss = build();
  ad::backward(loss);
  const auto grad = hm.grad();
  const double h = 1e-5;
  for (int i = 0; i < hm.size(); i += 7) {
    const double saved = hm.value()[static_cast<size_t>(i)];
    hm.mutable_value()[static_cast<size_t>(i)] = saved + h;
    const double up = build().item();
    hm.mutable_value()[static_cast<size_t>(i)] = saved - h;
    const double dn = build().item();
    hm.mutable_value()[static_cast<size_t>(i)] = saved;
    const double fd = (up - dn) / (2 * h);
    CHECK(std::abs(grad[static_cast<size_t>(i)] - fd) <
          1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("heatmap fixture dump round trip") {
  rng::Rng rng(39);
  const Pose25D pose = random_pose(rng, 256, 0.1);
  const Heatmap3D hm = heatmap::encode_gaussian(pose, {8, 8, 8}, 1.8, 0.4);
  const auto path = std::filesystem::temp_directory_path() / "iw_test.iwhm";
  heatmap::write_heatmap(hm, path);
  const Heatmap3D back = heatmap::read_heatmap(path);
  CHECK(back.dims.d == 8);
  CHECK(back.sigma == hm.sigma);
  CHECK(back.z_range == hm.z_range);
  for (size_t i = 0; i < hm.values.size(); ++i)
    CHECK(back.values[i] == static_cast<double>(static_cast<float>(hm.values[i])));
  std::filesystem::remove(path);
}
