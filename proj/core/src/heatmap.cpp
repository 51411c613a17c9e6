#include "iw/heatmap.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "iw/errors.hpp"
#include "iw/ops.hpp"

namespace iw::heatmap {

double depth_to_slice(double z, double z_range, int d) {
  return (z / z_range + 0.5) * d;
}

double slice_to_depth(double slice, double z_range, int d) {
  return (slice / d - 0.5) * z_range;
}

Heatmap3D encode_gaussian(const Pose25D& pose, Dims3 dims, double sigma,
                          double z_range, bool sum_normalize) {
  if (!(sigma > 0)) throw InvalidConfig("encode_gaussian: sigma must be > 0");
  if (!(z_range > 0)) throw InvalidConfig("encode_gaussian: z_range must be > 0");

  Heatmap3D hm;
  hm.dims = dims;
  hm.sigma = sigma;
  hm.z_range = z_range;
  hm.space = pose.space;
  const std::int64_t vol =
      static_cast<std::int64_t>(dims.d) * dims.h * dims.w;
  hm.values.assign(static_cast<size_t>(hand::kJoints) * vol, 0.0);

  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> gx(static_cast<size_t>(dims.w));
  std::vector<double> gy(static_cast<size_t>(dims.h));
  std::vector<double> gz(static_cast<size_t>(dims.d));

  for (int j = 0; j < hand::kJoints; ++j) {
    const geom::Vec3& p = pose.j[static_cast<size_t>(j)];
    const double jx = p.x * dims.w / pose.space.width;
    const double jy = p.y * dims.h / pose.space.height;
    const double jz = depth_to_slice(p.z, z_range, dims.d);

    // The blob is separable; per-axis factors multiply out to the full
    // exp(-(dx^2+dy^2+dz^2) / (2 sigma^2)).
    for (int x = 0; x < dims.w; ++x)
      gx[static_cast<size_t>(x)] = std::exp(-(x - jx) * (x - jx) * inv2s2);
    for (int y = 0; y < dims.h; ++y)
      gy[static_cast<size_t>(y)] = std::exp(-(y - jy) * (y - jy) * inv2s2);
    for (int z = 0; z < dims.d; ++z)
      gz[static_cast<size_t>(z)] = std::exp(-(z - jz) * (z - jz) * inv2s2);

    double* dst = hm.values.data() + static_cast<std::ptrdiff_t>(j) * vol;
    double sum = 0;
    for (int z = 0; z < dims.d; ++z)
      for (int y = 0; y < dims.h; ++y) {
        const double zy = gz[static_cast<size_t>(z)] * gy[static_cast<size_t>(y)];
        double* row = dst + (static_cast<std::ptrdiff_t>(z) * dims.h + y) * dims.w;
        for (int x = 0; x < dims.w; ++x) {
          row[x] = zy * gx[static_cast<size_t>(x)];
          sum += row[x];
        }
      }
    if (sum_normalize && sum > 0)
      for (std::int64_t i = 0; i < vol; ++i) dst[i] /= sum;
  }
  return hm;
}

std::vector<double> encode_gaussian_2d(const Pose25D& pose, int h, int w,
                                       double sigma, bool sum_normalize) {
  if (!(sigma > 0)) throw InvalidConfig("encode_gaussian_2d: sigma must be > 0");
  std::vector<double> out(static_cast<size_t>(hand::kJoints) * h * w, 0.0);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> gx(static_cast<size_t>(w)), gy(static_cast<size_t>(h));
  for (int j = 0; j < hand::kJoints; ++j) {
    const geom::Vec3& p = pose.j[static_cast<size_t>(j)];
    const double jx = p.x * w / pose.space.width;
    const double jy = p.y * h / pose.space.height;
    for (int x = 0; x < w; ++x)
      gx[static_cast<size_t>(x)] = std::exp(-(x - jx) * (x - jx) * inv2s2);
    for (int y = 0; y < h; ++y)
      gy[static_cast<size_t>(y)] = std::exp(-(y - jy) * (y - jy) * inv2s2);
    double* dst = out.data() + static_cast<std::ptrdiff_t>(j) * h * w;
    double sum = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        dst[y * w + x] = gy[static_cast<size_t>(y)] * gx[static_cast<size_t>(x)];
        sum += dst[y * w + x];
      }
    if (sum_normalize && sum > 0)
      for (int i = 0; i < h * w; ++i) dst[i] /= sum;
  }
  return out;
}

ad::Tensor soft_argmax_3d_op(const ad::Tensor& logits, Dims3 dims,
                             double z_range, const PixelSpace& space) {
  ad::Tensor vox = ad::soft_argmax_volume(logits);  // J x (x, y, z) voxels
  const int joints = logits.shape()[0];
  // Per-column affine back to pixel / depth units; broadcasting over rows.
  const double sx = space.width / dims.w;
  const double sy = space.height / dims.h;
  const double sz = z_range / dims.d;
  ad::Tensor scale = ad::Tensor::from_data({3}, {sx, sy, sz});
  ad::Tensor offset = ad::Tensor::from_data({3}, {0.0, 0.0, -0.5 * z_range});
  (void)joints;
  return ad::add(ad::mul(vox, scale), offset);
}

Pose25D soft_argmax_3d(const Heatmap3D& hm) {
  std::vector<double> logits(hm.values.begin(), hm.values.end());
  if (!hm.values_are_logits) {
    // ln turns nonnegative blob values into logits whose softmax is exactly
    // the sum-normalized map; empty channels fall back to uniform.
    const std::int64_t vol =
        static_cast<std::int64_t>(hm.dims.d) * hm.dims.h * hm.dims.w;
    for (int j = 0; j < hand::kJoints; ++j) {
      double* ch = logits.data() + static_cast<std::ptrdiff_t>(j) * vol;
      double mx = 0;
      for (std::int64_t i = 0; i < vol; ++i) mx = std::max(mx, ch[i]);
      for (std::int64_t i = 0; i < vol; ++i)
        ch[i] = mx > 0 && ch[i] > 0 ? std::log(ch[i]) : (mx > 0 ? -745.0 : 0.0);
    }
  }
  ad::Tensor t = ad::Tensor::from_data(
      {hand::kJoints, hm.dims.d, hm.dims.h, hm.dims.w}, std::move(logits));
  ad::Tensor mapped = soft_argmax_3d_op(t, hm.dims, hm.z_range, hm.space);
  Pose25D pose;
  pose.space = hm.space;
  const auto v = mapped.value();
  for (int j = 0; j < hand::kJoints; ++j)
    pose.j[static_cast<size_t>(j)] = {v[static_cast<size_t>(j) * 3 + 0],
                                      v[static_cast<size_t>(j) * 3 + 1],
                                      v[static_cast<size_t>(j) * 3 + 2]};
  return pose;
}

Heatmap3D flip_x(const Heatmap3D& hm) {
  Heatmap3D out = hm;
  const int w = hm.dims.w;
  const std::int64_t rows =
      static_cast<std::int64_t>(hand::kJoints) * hm.dims.d * hm.dims.h;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = hm.values.data() + r * w;
    double* dst = out.values.data() + r * w;
    for (int x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fixture dump
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'I', 'W', 'H', 'M'};

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::uint64_t u = 0;
  std::memcpy(&u, &v, sizeof(T));
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  std::uint64_t u = 0;
  for (size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  T v;
  std::memcpy(&v, &u, sizeof(T));
  return v;
}

}  // namespace

void write_heatmap(const Heatmap3D& hm, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_heatmap: cannot open " + path.string());
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(hand::kJoints));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(hm.dims.d));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(hm.dims.h));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(hm.dims.w));
  put_le<double>(os, hm.z_range);
  put_le<double>(os, hm.sigma);
  for (double v : hm.values) put_le<float>(os, static_cast<float>(v));
  if (!os) throw Error("write_heatmap: write failed for " + path.string());
}

Heatmap3D read_heatmap(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("read_heatmap: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("read_heatmap: bad magic in " + path.string());
  const auto joints = get_le<std::uint32_t>(is);
  Heatmap3D hm;
  hm.dims.d = static_cast<int>(get_le<std::uint32_t>(is));
  hm.dims.h = static_cast<int>(get_le<std::uint32_t>(is));
  hm.dims.w = static_cast<int>(get_le<std::uint32_t>(is));
  hm.z_range = get_le<double>(is);
  hm.sigma = get_le<double>(is);
  if (joints != static_cast<std::uint32_t>(hand::kJoints))
    throw ParseError("read_heatmap: expected " + std::to_string(hand::kJoints) +
                     " joints, file has " + std::to_string(joints));
  const std::int64_t vol =
      static_cast<std::int64_t>(hm.dims.d) * hm.dims.h * hm.dims.w;
  hm.values.resize(static_cast<size_t>(hand::kJoints) * vol);
  for (auto& v : hm.values) v = static_cast<double>(get_le<float>(is));
  if (!is) throw ParseError("read_heatmap: truncated file " + path.string());
  return hm;
}

}  // namespace iw::heatmap
