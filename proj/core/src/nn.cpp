#include "iw/nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "iw/errors.hpp"
#include "iw/ops.hpp"

namespace iw::nn {

Linear::Linear(const std::string& name_, int in, int out, rng::Rng& rng)
    : name(name_) {
  std::vector<double> w(static_cast<size_t>(in) * out);
  const double scale = std::sqrt(2.0 / in);
  for (double& v : w) v = rng.normal() * scale;
  weight = ad::Tensor::param({in, out}, std::move(w));
  bias = ad::Tensor::param({out}, std::vector<double>(static_cast<size_t>(out), 0.0));
}

Linear Linear::zero_init(const std::string& name, int in, int out,
                         std::span<const double> bias_values) {
  Linear l;
  l.name = name;
  l.weight = ad::Tensor::param(
      {in, out}, std::vector<double>(static_cast<size_t>(in) * out, 0.0));
  std::vector<double> b(static_cast<size_t>(out), 0.0);
  if (!bias_values.empty()) {
    if (bias_values.size() != static_cast<size_t>(out))
      throw ShapeMismatch("Linear::zero_init: bias size " +
                          std::to_string(bias_values.size()) + " vs out " +
                          std::to_string(out));
    b.assign(bias_values.begin(), bias_values.end());
  }
  l.bias = ad::Tensor::param({out}, std::move(b));
  return l;
}

ad::Tensor Linear::forward(const ad::Tensor& x) const {
  return ad::add(ad::matmul(x, weight), bias);
}

void Linear::collect(std::vector<Param>& out) {
  out.push_back({name + ".weight", weight});
  out.push_back({name + ".bias", bias});
}

Conv2dLayer::Conv2dLayer(const std::string& name_, int in_ch, int out_ch,
                         int ksize, int stride_, int padding_, rng::Rng& rng)
    : stride(stride_), padding(padding_), name(name_) {
  std::vector<double> k(static_cast<size_t>(out_ch) * in_ch * ksize * ksize);
  const double scale = std::sqrt(2.0 / (in_ch * ksize * ksize));
  for (double& v : k) v = rng.normal() * scale;
  kernels = ad::Tensor::param({out_ch, in_ch, ksize, ksize}, std::move(k));
  bias = ad::Tensor::param({out_ch},
                           std::vector<double>(static_cast<size_t>(out_ch), 0.0));
}

ad::Tensor Conv2dLayer::forward(const ad::Tensor& x) const {
  return ad::conv2d(x, kernels, bias, stride, padding);
}

void Conv2dLayer::collect(std::vector<Param>& out) {
  out.push_back({name + ".kernels", kernels});
  out.push_back({name + ".bias", bias});
}

CompactCNN::CompactCNN(const std::string& name, int in_ch,
                       std::span<const int> widths, rng::Rng& rng,
                       std::span<const int> strides) {
  if (!strides.empty() && strides.size() != widths.size())
    throw InvalidConfig("CompactCNN: strides must match widths");
  int ch = in_ch;
  for (size_t i = 0; i < widths.size(); ++i) {
    const int stride = strides.empty() ? 2 : strides[i];
    blocks.emplace_back(name + ".block" + std::to_string(i), ch, widths[i], 3,
                        stride, 1, rng);
    ch = widths[i];
  }
}

ad::Tensor CompactCNN::forward(const ad::Tensor& x) const {
  ad::Tensor h = x;
  for (const auto& b : blocks) h = ad::relu(b.forward(h));
  return h;
}

void CompactCNN::collect(std::vector<Param>& out) {
  for (auto& b : blocks) b.collect(out);
}

int CompactCNN::out_channels() const {
  return blocks.empty() ? 0 : blocks.back().kernels.shape()[0];
}

double Adam::effective_lr(int epoch) const {
  return epoch >= cfg_.drop_epoch ? cfg_.lr * cfg_.drop_factor : cfg_.lr;
}

void Adam::step(std::span<Param> params, int epoch) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params[i].t.size()), 0.0);
      v_[i].assign(static_cast<size_t>(params[i].t.size()), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw InvalidConfig("Adam::step: parameter count changed");

  ++step_;
  const double lr = effective_lr(epoch);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].t;
    auto val = p.mutable_value();
    const auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < val.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      val[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[5] = {'I', 'W', 'C', 'K', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

void save_checkpoint(std::span<const Param> params,
                     const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("save_checkpoint: cannot open " + path.string());
  os.write(kMagic, 5);
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, static_cast<std::uint32_t>(p.t.shape().size()));
    for (int d : p.t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  }
  for (const auto& p : params)
    for (double v : p.t.value()) put_f64(os, v);
  if (!os) throw Error("save_checkpoint: write failed for " + path.string());
}

void load_checkpoint(std::span<Param> params,
                     const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("load_checkpoint: cannot open " + path.string());
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kMagic, 5) != 0)
    throw ParseError("load_checkpoint: bad magic in " + path.string());
  const std::uint32_t count = get_u32(is);
  if (count != params.size())
    throw ParseError("load_checkpoint: file has " + std::to_string(count) +
                     " params, model expects " + std::to_string(params.size()));
  std::vector<std::string> names(count);
  std::vector<ad::Shape> shapes(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = get_u32(is);
    names[i].resize(len);
    is.read(names[i].data(), len);
    const std::uint32_t nd = get_u32(is);
    shapes[i].resize(nd);
    for (auto& d : shapes[i]) d = static_cast<int>(get_u32(is));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    if (names[i] != params[i].name || shapes[i] != params[i].t.shape())
      throw ParseError("load_checkpoint: entry " + std::to_string(i) + " is " +
                       names[i] + ad::shape_str(shapes[i]) +
                       ", model expects " + params[i].name +
                       ad::shape_str(params[i].t.shape()));
    auto val = params[i].t.mutable_value();
    for (auto& v : val) v = get_f64(is);
  }
  if (!is) throw ParseError("load_checkpoint: truncated file " + path.string());
}

}  // namespace iw::nn
