#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iw/losses.hpp"
#include "iw/nn.hpp"
#include "iw/pose.hpp"
#include "iw/synth.hpp"
#include "iw/tensor.hpp"

namespace iw::transnet {

/// What the regressor consumes: volumetric Gaussian heatmaps of both hands'
/// 2.5-D poses (depth folded into channels), flat 2-D heatmaps, the
/// rasterized union-space image, or image plus volumetric heatmaps.
enum class InputRepr { hm25d, hm2d, image, image_plus_hm };

/// How the feature map is read out: bilinear samples at the two wrists
/// concatenated with their normalized coordinates, global average pooling,
/// samples at all joints of both hands, or a coordinate MLP that bypasses
/// the CNN entirely.
enum class Head { wrist, gap, all_joints, fc };

const char* input_repr_name(InputRepr r);
InputRepr input_repr_from_name(const std::string& name);
const char* head_name(Head h);
Head head_from_name(const std::string& name);

struct TransNetConfig {
  InputRepr input_repr = InputRepr::hm25d;
  Head head = Head::wrist;
  int depth = 16, height = 16, width = 16;
  int channels = 64;  // feature-map channels C
  /// Backbone blocks: widths of all but the last block (which has
  /// `channels`), and per-block strides. Strides must multiply to 8, the
  /// feature-map contract. Stride-1 blocks add depth without downsampling.
  std::vector<int> conv_widths = {32, 48};
  std::vector<int> conv_strides = {2, 2, 2};
  double sigma = 2.5;    // heatmap blob width, voxels
  double z_range = 0.4;  // heatmap depth coverage, meters
  int union_res = 256;
  bool weak_supervision = false;  // adds a global-translation output
  bool hm_sum_normalize = false;  // per-joint unit-sum heatmaps
  bool use_conv3d = false;  // volumetric-conv feed; rejected (not implemented)
  int fc_hidden = 128;

  int input_channels() const;
  int output_dim() const { return weak_supervision ? 6 : 3; }
  void validate() const;
};

/// Per-sample sampling positions in union pixels: the two wrists (right,
/// left) and, for the all_joints head, every joint of both hands.
struct SamplePoints {
  std::array<geom::Vec2, 2> wrists;
  std::array<geom::Vec2, 2 * hand::kJoints> joints;
};

/// A scene's geometric inputs re-expressed in the union-box space.
struct UnionSample {
  Pose25D pose_r, pose_l;
  crop::CropSpec union_spec;

  SamplePoints points() const;
};
UnionSample to_union(const synth::SceneRecord& s, int union_res);

/// Single-sample input tensor, 1 x C x H x W (or the flat coordinate vector
/// for the fc head). For image representations, `render_domain` selects the
/// appearance; heatmap representations never consult it.
ad::Tensor build_input(const Pose25D& pose_r_union, const Pose25D& pose_l_union,
                       const TransNetConfig& cfg,
                       const synth::SceneRecord* scene_for_image,
                       synth::Domain render_domain);

struct BatchInput {
  ad::Tensor input;  // N x C x H x W, or N x 126 for the fc head
  std::vector<SamplePoints> points;
  std::vector<UnionSample> samples;
};
BatchInput build_batch(std::span<const synth::SceneRecord> scenes,
                       std::span<const int> indices, const TransNetConfig& cfg,
                       std::optional<synth::Domain> render_override);

class TransNet {
 public:
  TransNet(const TransNetConfig& cfg, std::uint64_t seed);

  /// N x output_dim(): columns 0..2 are the relative translation, columns
  /// 3..5 (weak-supervision mode) the right-hand global translation.
  ad::Tensor forward(const ad::Tensor& input,
                     std::span<const SamplePoints> points);

  std::span<nn::Param> params() { return params_; }
  const TransNetConfig& config() const { return cfg_; }

 private:
  TransNetConfig cfg_;
  nn::CompactCNN backbone_;
  nn::Linear fc1_, fc2_;  // fc head only
  nn::Linear head_;
  std::vector<nn::Param> params_;
};

struct TrainOptions {
  int epochs = 10;
  int batch_size = 64;
  nn::AdamConfig adam{};
  std::uint64_t seed = 1;
  /// Std-dev of deterministic depth noise applied to the global-translation
  /// supervision of itw scenes (emulates a wrong estimated translation).
  double itw_g_noise_sigma = 0.0;
  losses::LossWeights weights{};
  std::string metrics_csv;  // when set, per-epoch rows are appended
};

struct EpochRow {
  int epoch;
  std::string split;
  double mrrpe_mm;
  double loss;
};

struct TrainResult {
  std::vector<EpochRow> history;
  double final_train_loss = 0;
  double final_heldout_mrrpe = 0;
};

/// Minimizes L1 on the relative translation over scenes with full 3-D
/// ground truth; in weak-supervision mode, mini-batches are half itw scenes
/// supervised through the 2-D reprojection term plus an L1 anchor on the
/// global translation. Throws TrainingDiverged on non-finite loss and
/// ConfigError when weak supervision is requested without usable itw scenes.
TrainResult train(TransNet& net, std::span<const synth::SceneRecord> train_scenes,
                  std::span<const synth::SceneRecord> heldout,
                  const TrainOptions& opts);

struct EvalResult {
  double mrrpe_mm = 0;
  int evaluated = 0;
  int skipped = 0;  // scenes with a hand out of frame
};
EvalResult evaluate_mrrpe(TransNet& net,
                          std::span<const synth::SceneRecord> scenes,
                          std::optional<synth::Domain> render_override = {});

/// Mean ground-truth relative-translation magnitude in millimeters — the
/// error of always predicting zero.
double predict_zero_baseline_mm(std::span<const synth::SceneRecord> scenes);

}  // namespace iw::transnet
