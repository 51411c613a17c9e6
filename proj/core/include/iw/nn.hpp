#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "iw/rng.hpp"
#include "iw/tensor.hpp"

namespace iw::nn {

/// Named trainable tensor; the unit of optimization and checkpointing.
struct Param {
  std::string name;
  ad::Tensor t;
};

/// Fully connected layer, x (N x in) -> x W + b (N x out).
class Linear {
 public:
  Linear() = default;
  /// He-style initialization of W; b zero.
  Linear(const std::string& name, int in, int out, rng::Rng& rng);
  /// Zero W and constant bias — used for regression heads so an untrained
  /// network emits the bias exactly.
  static Linear zero_init(const std::string& name, int in, int out,
                          std::span<const double> bias = {});

  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(std::vector<Param>& out);

  ad::Tensor weight, bias;
  std::string name;
};

/// Convolution layer with odd square kernels.
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int in_ch, int out_ch, int ksize,
              int stride, int padding, rng::Rng& rng);

  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(std::vector<Param>& out);

  ad::Tensor kernels, bias;
  int stride = 1, padding = 0;
  std::string name;
};

/// Stack of 3x3 conv + relu blocks. Each block downsamples by its stride;
/// the default is stride 2 everywhere.
class CompactCNN {
 public:
  CompactCNN() = default;
  /// widths lists the output channels of each block.
  CompactCNN(const std::string& name, int in_ch, std::span<const int> widths,
             rng::Rng& rng, std::span<const int> strides = {});

  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(std::vector<Param>& out);
  int out_channels() const;

  std::vector<Conv2dLayer> blocks;
};

/// Adam with bias correction and a step-function learning-rate schedule:
/// the rate is multiplied by drop_factor for epochs >= drop_epoch.
struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int drop_epoch = 4;
  double drop_factor = 0.1;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  double effective_lr(int epoch) const;

  /// Applies one update from the gradients currently stored in the params,
  /// then zeroes them. `epoch` selects the scheduled rate.
  void step(std::span<Param> params, int epoch);

  const AdamConfig& config() const { return cfg_; }
  long step_count() const { return step_; }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Checkpoint I/O: magic "IWCK1", then a name-indexed manifest and
/// little-endian fp64 blobs.
void save_checkpoint(std::span<const Param> params,
                     const std::filesystem::path& path);
/// Loads by name into existing params; shapes must match.
void load_checkpoint(std::span<Param> params,
                     const std::filesystem::path& path);

}  // namespace iw::nn
