#include "iw/transnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "iw/errors.hpp"
#include "iw/heatmap.hpp"
#include "iw/ops.hpp"
#include "iw/rng.hpp"

namespace iw::transnet {

using geom::Vec2;
using geom::Vec3;

const char* input_repr_name(InputRepr r) {
  switch (r) {
    case InputRepr::hm25d: return "hm25d";
    case InputRepr::hm2d: return "hm2d";
    case InputRepr::image: return "image";
    default: return "image_plus_hm";
  }
}

InputRepr input_repr_from_name(const std::string& name) {
  if (name == "hm25d") return InputRepr::hm25d;
  if (name == "hm2d") return InputRepr::hm2d;
  if (name == "image") return InputRepr::image;
  if (name == "image_plus_hm") return InputRepr::image_plus_hm;
  throw ConfigError("unknown input representation '" + name + "'");
}

const char* head_name(Head h) {
  switch (h) {
    case Head::wrist: return "wrist";
    case Head::gap: return "gap";
    case Head::all_joints: return "all_joints";
    default: return "fc";
  }
}

Head head_from_name(const std::string& name) {
  if (name == "wrist") return Head::wrist;
  if (name == "gap") return Head::gap;
  if (name == "all_joints") return Head::all_joints;
  if (name == "fc") return Head::fc;
  throw ConfigError("unknown head '" + name + "'");
}

int TransNetConfig::input_channels() const {
  switch (input_repr) {
    case InputRepr::hm25d: return 2 * hand::kJoints * depth;
    case InputRepr::hm2d: return 2 * hand::kJoints;
    case InputRepr::image: return 3;
    default: return 3 + 2 * hand::kJoints * depth;
  }
}

void TransNetConfig::validate() const {
  if (use_conv3d)
    throw ConfigError(
        "use_conv3d: volumetric convolution feed is not implemented; the "
        "depth-to-channel reshape is the supported path");
  if (depth <= 0 || height <= 0 || width <= 0 || channels <= 0)
    throw InvalidConfig("TransNetConfig: dimensions must be positive");
  if (height % 8 != 0 || width % 8 != 0)
    throw InvalidConfig(
        "TransNetConfig: height/width must be divisible by 8 (the /8 "
        "feature-map stride)");
  if (conv_widths.size() + 1 != conv_strides.size())
    throw InvalidConfig(
        "TransNetConfig: conv_widths must have one entry fewer than "
        "conv_strides (the last block is `channels` wide)");
  int total = 1;
  for (int s : conv_strides) {
    if (s != 1 && s != 2)
      throw InvalidConfig("TransNetConfig: block strides must be 1 or 2");
    total *= s;
  }
  if (total != 8)
    throw InvalidConfig(
        "TransNetConfig: block strides must multiply to the /8 feature-map "
        "contract");
  if (!(sigma > 0) || !(z_range > 0) || union_res <= 0 || fc_hidden <= 0)
    throw InvalidConfig("TransNetConfig: sigma/z_range/union_res/fc_hidden");
}

SamplePoints UnionSample::points() const {
  SamplePoints p;
  p.wrists = {Vec2{pose_r.j[0].x, pose_r.j[0].y},
              Vec2{pose_l.j[0].x, pose_l.j[0].y}};
  for (int j = 0; j < hand::kJoints; ++j) {
    p.joints[static_cast<size_t>(j)] = {pose_r.j[static_cast<size_t>(j)].x,
                                        pose_r.j[static_cast<size_t>(j)].y};
    p.joints[static_cast<size_t>(hand::kJoints + j)] = {
        pose_l.j[static_cast<size_t>(j)].x, pose_l.j[static_cast<size_t>(j)].y};
  }
  return p;
}

UnionSample to_union(const synth::SceneRecord& s, int union_res) {
  UnionSample u;
  const geom::Box2D ub = crop::union_box(s.box_r, s.box_l);
  u.union_spec = crop::union_crop(ub, union_res);
  u.pose_r = crop::to_union_space(
      s.pose_r, crop::prepare_hand_crop(s.box_r, false), ub, union_res);
  u.pose_l = crop::to_union_space(
      s.pose_l, crop::prepare_hand_crop(s.box_l, true), ub, union_res);
  return u;
}

namespace {

void append_volume_channels(std::vector<double>& dst, const Pose25D& pose,
                            const TransNetConfig& cfg) {
  const heatmap::Heatmap3D hm = heatmap::encode_gaussian(
      pose, {cfg.depth, cfg.height, cfg.width}, cfg.sigma, cfg.z_range,
      cfg.hm_sum_normalize);
  // J x D x H x W in row-major order is already (J*D) x H x W channel data.
  dst.insert(dst.end(), hm.values.begin(), hm.values.end());
}

void append_plane_channels(std::vector<double>& dst, const Pose25D& pose,
                           const TransNetConfig& cfg) {
  const auto planes = heatmap::encode_gaussian_2d(
      pose, cfg.height, cfg.width, cfg.sigma, cfg.hm_sum_normalize);
  dst.insert(dst.end(), planes.begin(), planes.end());
}

void append_image_channels(std::vector<double>& dst,
                           const synth::SceneRecord& scene,
                           synth::Domain domain, const TransNetConfig& cfg) {
  const synth::Raster img = synth::rasterize_union(scene, domain, cfg.width);
  // HWC -> CHW
  for (int c = 0; c < synth::Raster::channels; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) dst.push_back(img.at(y, x, c));
}

std::vector<double> fc_coordinates(const Pose25D& r, const Pose25D& l,
                                   const TransNetConfig& cfg) {
  std::vector<double> out;
  out.reserve(2 * hand::kJoints * 3);
  for (const Pose25D* p : {&r, &l})
    for (const auto& j : p->j) {
      out.push_back(j.x / cfg.union_res);
      out.push_back(j.y / cfg.union_res);
      out.push_back(j.z / cfg.z_range + 0.5);
    }
  return out;
}

std::vector<double> sample_input_values(const Pose25D& r, const Pose25D& l,
                                        const TransNetConfig& cfg,
                                        const synth::SceneRecord* scene,
                                        synth::Domain domain) {
  if (cfg.head == Head::fc) return fc_coordinates(r, l, cfg);
  std::vector<double> vals;
  vals.reserve(static_cast<size_t>(cfg.input_channels()) * cfg.height *
               cfg.width);
  switch (cfg.input_repr) {
    case InputRepr::hm25d:
      append_volume_channels(vals, r, cfg);
      append_volume_channels(vals, l, cfg);
      break;
    case InputRepr::hm2d:
      append_plane_channels(vals, r, cfg);
      append_plane_channels(vals, l, cfg);
      break;
    case InputRepr::image:
      if (!scene) throw InvalidConfig("build_input: image input needs a scene");
      append_image_channels(vals, *scene, domain, cfg);
      break;
    case InputRepr::image_plus_hm:
      if (!scene) throw InvalidConfig("build_input: image input needs a scene");
      append_image_channels(vals, *scene, domain, cfg);
      append_volume_channels(vals, r, cfg);
      append_volume_channels(vals, l, cfg);
      break;
  }
  return vals;
}

void check_union_space(const Pose25D& p, const char* what) {
  if (p.space.kind != PixelSpace::Kind::union_box)
    throw SpaceMismatch(std::string("build_input: ") + what +
                        " pose is not in union space");
}

}  // namespace

ad::Tensor build_input(const Pose25D& pose_r_union, const Pose25D& pose_l_union,
                       const TransNetConfig& cfg,
                       const synth::SceneRecord* scene_for_image,
                       synth::Domain render_domain) {
  cfg.validate();
  check_union_space(pose_r_union, "right");
  check_union_space(pose_l_union, "left");
  std::vector<double> vals = sample_input_values(
      pose_r_union, pose_l_union, cfg, scene_for_image, render_domain);
  if (cfg.head == Head::fc)
    return ad::Tensor::from_data({1, 2 * hand::kJoints * 3}, std::move(vals));
  return ad::Tensor::from_data({1, cfg.input_channels(), cfg.height, cfg.width},
                               std::move(vals));
}

BatchInput build_batch(std::span<const synth::SceneRecord> scenes,
                       std::span<const int> indices, const TransNetConfig& cfg,
                       std::optional<synth::Domain> render_override) {
  BatchInput batch;
  const int n = static_cast<int>(indices.size());
  std::vector<double> vals;
  for (int i = 0; i < n; ++i) {
    const synth::SceneRecord& s =
        scenes[static_cast<size_t>(indices[static_cast<size_t>(i)])];
    UnionSample u = to_union(s, cfg.union_res);
    const synth::Domain dom = render_override.value_or(s.domain);
    std::vector<double> one =
        sample_input_values(u.pose_r, u.pose_l, cfg, &s, dom);
    vals.insert(vals.end(), one.begin(), one.end());
    batch.points.push_back(u.points());
    batch.samples.push_back(std::move(u));
  }
  if (cfg.head == Head::fc)
    batch.input =
        ad::Tensor::from_data({n, 2 * hand::kJoints * 3}, std::move(vals));
  else
    batch.input = ad::Tensor::from_data(
        {n, cfg.input_channels(), cfg.height, cfg.width}, std::move(vals));
  return batch;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

TransNet::TransNet(const TransNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  rng::Rng rng(seed);

  int head_in = 0;
  if (cfg_.head == Head::fc) {
    fc1_ = nn::Linear("transnet.fc1", 2 * hand::kJoints * 3, cfg_.fc_hidden, rng);
    fc2_ = nn::Linear("transnet.fc2", cfg_.fc_hidden, cfg_.fc_hidden, rng);
    head_in = cfg_.fc_hidden;
  } else {
    std::vector<int> widths = cfg_.conv_widths;
    widths.push_back(cfg_.channels);
    backbone_ = nn::CompactCNN("transnet.backbone", cfg_.input_channels(),
                               widths, rng, cfg_.conv_strides);
    switch (cfg_.head) {
      case Head::wrist: head_in = 2 * cfg_.channels + 4; break;
      case Head::gap: head_in = cfg_.channels; break;
      case Head::all_joints: head_in = 2 * hand::kJoints * cfg_.channels; break;
      default: break;
    }
  }

  // Zero-initialized regression head: an untrained network outputs exactly
  // the bias, i.e. t = 0 (plus a 0.5 m global depth in weak mode so the
  // reprojection term is well defined from the first step).
  std::vector<double> bias(static_cast<size_t>(cfg_.output_dim()), 0.0);
  if (cfg_.weak_supervision) bias[5] = 0.5;
  head_ =
      nn::Linear::zero_init("transnet.head", head_in, cfg_.output_dim(), bias);

  if (cfg_.head == Head::fc) {
    fc1_.collect(params_);
    fc2_.collect(params_);
  } else {
    backbone_.collect(params_);
  }
  head_.collect(params_);
}

ad::Tensor TransNet::forward(const ad::Tensor& input,
                             std::span<const SamplePoints> points) {
  if (cfg_.head == Head::fc) {
    ad::Tensor h = ad::relu(fc1_.forward(input));
    h = ad::relu(fc2_.forward(h));
    return head_.forward(h);
  }

  const ad::Tensor f = backbone_.forward(input);
  const int n = input.shape()[0];
  if (cfg_.head != Head::gap && static_cast<int>(points.size()) != n)
    throw ShapeMismatch("TransNet::forward: " + std::to_string(points.size()) +
                        " point sets for batch of " + std::to_string(n));
  // Union pixels -> input cells -> /8 feature cells.
  const double sx = (static_cast<double>(cfg_.width) / cfg_.union_res) / 8.0;
  const double sy = (static_cast<double>(cfg_.height) / cfg_.union_res) / 8.0;

  ad::Tensor feats;
  switch (cfg_.head) {
    case Head::gap:
      feats = ad::global_avg_pool(f);
      break;
    case Head::wrist: {
      std::vector<double> pos, coords;
      for (int i = 0; i < n; ++i)
        for (const Vec2& w : points[static_cast<size_t>(i)].wrists) {
          pos.push_back(w.x * sx);
          pos.push_back(w.y * sy);
          coords.push_back(w.x / cfg_.union_res);
          coords.push_back(w.y / cfg_.union_res);
        }
      const ad::Tensor sampled = ad::sample_features(
          f, ad::Tensor::from_data({n, 2, 2}, std::move(pos)));
      const ad::Tensor flat = ad::reshape(sampled, {n, 2 * cfg_.channels});
      const ad::Tensor xy = ad::Tensor::from_data({n, 4}, std::move(coords));
      const ad::Tensor parts[] = {flat, xy};
      feats = ad::concat(parts, 1);
      break;
    }
    case Head::all_joints: {
      constexpr int np = 2 * hand::kJoints;
      std::vector<double> pos;
      for (int i = 0; i < n; ++i)
        for (const Vec2& w : points[static_cast<size_t>(i)].joints) {
          pos.push_back(w.x * sx);
          pos.push_back(w.y * sy);
        }
      const ad::Tensor sampled = ad::sample_features(
          f, ad::Tensor::from_data({n, np, 2}, std::move(pos)));
      feats = ad::reshape(sampled, {n, np * cfg_.channels});
      break;
    }
    default:
      break;
  }
  return head_.forward(feats);
}

// ---------------------------------------------------------------------------
// Training / evaluation
// ---------------------------------------------------------------------------

namespace {

Vec3 row_vec3(std::span<const double> values, int row, int stride) {
  return {values[static_cast<size_t>(row) * stride + 0],
          values[static_cast<size_t>(row) * stride + 1],
          values[static_cast<size_t>(row) * stride + 2]};
}

struct WeakGt {
  std::vector<Vec3> joints_r, joints_l;  // root-relative
  std::vector<Vec2> gt2d_r, gt2d_l;      // union pixels
  Vec3 g_supervision;                    // possibly depth-corrupted
};

WeakGt weak_gt_for(const synth::SceneRecord& s, const UnionSample& u,
                   double g_noise) {
  WeakGt w;
  const hand::HandMesh mr = synth::gt_mesh(s, hand::Handedness::right);
  const hand::HandMesh ml = synth::gt_mesh(s, hand::Handedness::left);
  w.joints_r.assign(mr.joints.begin(), mr.joints.end());
  w.joints_l.assign(ml.joints.begin(), ml.joints.end());
  for (int j = 0; j < hand::kJoints; ++j) {
    w.gt2d_r.push_back(geom::apply_affine(u.union_spec.affine,
                                          s.joints2d_r[static_cast<size_t>(j)]));
    w.gt2d_l.push_back(geom::apply_affine(u.union_spec.affine,
                                          s.joints2d_l[static_cast<size_t>(j)]));
  }
  w.g_supervision = s.g_r + Vec3{0, 0, g_noise};
  return w;
}

double checked_loss_value(const ad::Tensor& loss) {
  const double v = loss.item();
  if (!std::isfinite(v))
    throw TrainingDiverged("training diverged: loss is not finite");
  return v;
}

void append_csv(const std::string& path, const EpochRow& row) {
  if (path.empty()) return;
  std::ofstream os(path, std::ios::binary | std::ios::app);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g\n", row.epoch,
                row.split.c_str(), row.mrrpe_mm, row.loss);
  os << buf;
}

}  // namespace

EvalResult evaluate_mrrpe(TransNet& net,
                          std::span<const synth::SceneRecord> scenes,
                          std::optional<synth::Domain> render_override) {
  EvalResult res;
  std::vector<int> usable;
  for (int i = 0; i < static_cast<int>(scenes.size()); ++i) {
    if (scenes[static_cast<size_t>(i)].visible_r &&
        scenes[static_cast<size_t>(i)].visible_l)
      usable.push_back(i);
    else
      ++res.skipped;
  }

  constexpr int kEvalBatch = 64;
  double acc = 0;
  for (size_t start = 0; start < usable.size(); start += kEvalBatch) {
    const size_t count = std::min<size_t>(kEvalBatch, usable.size() - start);
    std::span<const int> idx(usable.data() + start, count);
    BatchInput batch = build_batch(scenes, idx, net.config(), render_override);
    const ad::Tensor out = net.forward(batch.input, batch.points);
    for (size_t i = 0; i < count; ++i) {
      const Vec3 t_pred =
          row_vec3(out.value(), static_cast<int>(i), net.config().output_dim());
      const synth::SceneRecord& s = scenes[static_cast<size_t>(idx[i])];
      acc += geom::norm(t_pred - s.t_gt) * 1000.0;
    }
  }
  res.evaluated = static_cast<int>(usable.size());
  res.mrrpe_mm = usable.empty() ? 0.0 : acc / static_cast<double>(usable.size());
  return res;
}

double predict_zero_baseline_mm(std::span<const synth::SceneRecord> scenes) {
  double acc = 0;
  int n = 0;
  for (const auto& s : scenes) {
    if (!(s.visible_r && s.visible_l)) continue;
    acc += geom::norm(s.t_gt) * 1000.0;
    ++n;
  }
  return n > 0 ? acc / n : 0.0;
}

TrainResult train(TransNet& net, std::span<const synth::SceneRecord> train_scenes,
                  std::span<const synth::SceneRecord> heldout,
                  const TrainOptions& opts) {
  const TransNetConfig& cfg = net.config();

  // Scenes usable for full supervision vs. 2-D-only weak supervision.
  std::vector<int> mocap_idx, itw_idx;
  for (int i = 0; i < static_cast<int>(train_scenes.size()); ++i) {
    const auto& s = train_scenes[static_cast<size_t>(i)];
    if (!(s.visible_r && s.visible_l)) continue;
    if (s.has_3d_gt())
      mocap_idx.push_back(i);
    else
      itw_idx.push_back(i);
  }
  if (mocap_idx.empty())
    throw ConfigError("train: no fully-labeled scenes in the training set");
  if (cfg.weak_supervision && itw_idx.empty())
    throw ConfigError(
        "train: weak_supervision=true but the training set has no itw scenes "
        "with both hands visible");

  // Deterministic per-scene depth noise for the itw global supervision.
  std::vector<double> g_noise(train_scenes.size(), 0.0);
  if (opts.itw_g_noise_sigma > 0) {
    for (int i : itw_idx) {
      rng::Rng r = rng::Rng::stream(opts.seed ^ 0x9E3779B97F4A7C15ULL,
                                    static_cast<std::uint64_t>(i));
      g_noise[static_cast<size_t>(i)] = r.normal(0.0, opts.itw_g_noise_sigma);
    }
  }

  nn::Adam adam(opts.adam);
  rng::Rng shuffle_rng(opts.seed);
  TrainResult result;

  const int full_per_batch =
      cfg.weak_supervision ? std::max(1, opts.batch_size / 2) : opts.batch_size;
  const int weak_per_batch =
      cfg.weak_supervision ? opts.batch_size - full_per_batch : 0;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    // Per-epoch shuffles, derived from the run seed only.
    auto shuffled = [&](std::vector<int> v) {
      for (size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1],
                  v[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);
      return v;
    };
    const std::vector<int> mocap_order = shuffled(mocap_idx);
    const std::vector<int> itw_order = shuffled(itw_idx);

    const int steps = std::max<int>(
        1, static_cast<int>(mocap_order.size()) / std::max(1, full_per_batch));
    double loss_acc = 0;
    int loss_count = 0;

    for (int step = 0; step < steps; ++step) {
      // Assemble the batch: fully labeled rows first, then weak rows.
      std::vector<int> idx;
      for (int i = 0; i < full_per_batch; ++i) {
        const size_t k = static_cast<size_t>(step) * full_per_batch + i;
        if (k >= mocap_order.size()) break;
        idx.push_back(mocap_order[k]);
      }
      const int n_full = static_cast<int>(idx.size());
      if (n_full == 0) continue;
      for (int i = 0; i < weak_per_batch && !itw_order.empty(); ++i) {
        const size_t k =
            (static_cast<size_t>(step) * weak_per_batch + i) % itw_order.size();
        idx.push_back(itw_order[k]);
      }
      const int n_total = static_cast<int>(idx.size());

      BatchInput batch = build_batch(train_scenes, idx, cfg, std::nullopt);
      const ad::Tensor out = net.forward(batch.input, batch.points);

      // L1 on the relative translation over the fully labeled rows.
      const ad::Tensor t_full =
          ad::slice(ad::slice(out, 0, 0, n_full), 1, 0, 3);
      std::vector<double> t_gt;
      for (int i = 0; i < n_full; ++i) {
        const auto& s = train_scenes[static_cast<size_t>(idx[static_cast<size_t>(i)])];
        t_gt.insert(t_gt.end(), {s.t_gt.x, s.t_gt.y, s.t_gt.z});
      }
      ad::Tensor loss = ad::scalar_mul(
          ad::l1_loss(t_full,
                      ad::Tensor::from_data({n_full, 3}, std::move(t_gt))),
          opts.weights.reltrans);

      if (cfg.weak_supervision) {
        // Global-translation anchor on every row (corrupted on itw rows),
        // plus the 2-D reprojection term on the weak rows.
        std::vector<double> g_gt;
        for (int i = 0; i < n_total; ++i) {
          const auto& s = train_scenes[static_cast<size_t>(idx[static_cast<size_t>(i)])];
          const double noise = g_noise[static_cast<size_t>(idx[static_cast<size_t>(i)])];
          g_gt.insert(g_gt.end(), {s.g_r.x, s.g_r.y, s.g_r.z + noise});
        }
        const ad::Tensor g_pred = ad::slice(out, 1, 3, 3);
        loss = ad::add(loss,
                       ad::l1_loss(g_pred, ad::Tensor::from_data(
                                               {n_total, 3}, std::move(g_gt))));

        ad::Tensor weak_acc;
        for (int i = n_full; i < n_total; ++i) {
          const int scene_i = idx[static_cast<size_t>(i)];
          const auto& s = train_scenes[static_cast<size_t>(scene_i)];
          const WeakGt w = weak_gt_for(s, batch.samples[static_cast<size_t>(i)],
                                       g_noise[static_cast<size_t>(scene_i)]);
          const ad::Tensor row_t =
              ad::reshape(ad::slice(ad::slice(out, 0, i, 1), 1, 0, 3), {3});
          const ad::Tensor row_g =
              ad::reshape(ad::slice(ad::slice(out, 0, i, 1), 1, 3, 3), {3});
          const ad::Tensor term = losses::weak_supervision_loss(
              w.joints_r, w.joints_l, row_g, row_t, s.camera, w.gt2d_r,
              w.gt2d_l, batch.samples[static_cast<size_t>(i)].union_spec.affine,
              /*shared_beta=*/s.params_r.beta == s.params_l.beta);
          weak_acc = weak_acc.defined() ? ad::add(weak_acc, term) : term;
        }
        if (weak_acc.defined())
          loss = ad::add(loss, ad::scalar_mul(weak_acc,
                                              opts.weights.weak2d /
                                                  std::max(1, n_total - n_full)));
      }

      loss_acc += checked_loss_value(loss);
      ++loss_count;
      ad::backward(loss);
      adam.step(net.params(), epoch);
    }

    const double mean_loss = loss_count ? loss_acc / loss_count : 0.0;
    const EvalResult ev = evaluate_mrrpe(net, heldout, std::nullopt);
    result.history.push_back({epoch, "train", 0.0, mean_loss});
    result.history.push_back({epoch, "heldout", ev.mrrpe_mm, 0.0});
    append_csv(opts.metrics_csv, result.history[result.history.size() - 2]);
    append_csv(opts.metrics_csv, result.history.back());
    result.final_train_loss = mean_loss;
    result.final_heldout_mrrpe = ev.mrrpe_mm;
  }
  return result;
}

}  // namespace iw::transnet
