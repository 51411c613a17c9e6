#include "iw/transnet.hpp"

#include <cmath>
#include <doctest.h>

#include "iw/errors.hpp"
#include "iw/ops.hpp"
#include "iw/rng.hpp"

using namespace iw;
using geom::Vec2;
using synth::Domain;
using transnet::Head;
using transnet::InputRepr;
using transnet::TransNetConfig;

namespace {

TransNetConfig tiny_config(InputRepr repr = InputRepr::hm25d,
                           Head head = Head::wrist) {
  TransNetConfig cfg;
  cfg.input_repr = repr;
  cfg.head = head;
  cfg.depth = 4;
  cfg.height = cfg.width = 8;
  cfg.channels = 12;
  cfg.conv_widths = {8, 10};
  cfg.fc_hidden = 32;
  return cfg;
}

synth::SceneRecord make_scene(std::uint64_t index = 0, std::uint64_t seed = 71) {
  return synth::sample_scene(seed, index, synth::SynthConfig{});
}

}  // namespace

TEST_CASE("build_input channel counts") {
  TransNetConfig cfg;  // defaults: 16^3
  CHECK(TransNetConfig{}.input_channels() == 672);  // 2 * 21 * 16

  cfg.input_repr = InputRepr::hm2d;
  CHECK(cfg.input_channels() == 42);

  cfg.input_repr = InputRepr::image;
  CHECK(cfg.input_channels() == 3);

  cfg.input_repr = InputRepr::image_plus_hm;
  CHECK(cfg.input_channels() == 675);

  const auto scene = make_scene();
  const auto u = transnet::to_union(scene, 256);
  TransNetConfig small = tiny_config(InputRepr::hm25d);
  const ad::Tensor in =
      transnet::build_input(u.pose_r, u.pose_l, small, &scene, Domain::mocap);
  CHECK(in.shape() == ad::Shape{1, 2 * 21 * 4, 8, 8});
}

TEST_CASE("identical poses produce identical per-hand channel blocks") {
  const auto scene = make_scene(1);
  const auto u = transnet::to_union(scene, 256);
  TransNetConfig cfg = tiny_config();
  const ad::Tensor in =
      transnet::build_input(u.pose_r, u.pose_r, cfg, &scene, Domain::mocap);
  const std::int64_t half = in.size() / 2;
  for (std::int64_t i = 0; i < half; ++i)
    CHECK(in.value()[static_cast<size_t>(i)] ==
          in.value()[static_cast<size_t>(half + i)]);
}

TEST_CASE("build_input rejects non-union poses and conv3d configs") {
  const auto scene = make_scene(2);
  TransNetConfig cfg = tiny_config();
  CHECK_THROWS_AS(transnet::build_input(scene.pose_r, scene.pose_l, cfg, &scene,
                                        Domain::mocap),
                  SpaceMismatch);

  const auto u = transnet::to_union(scene, 256);
  TransNetConfig bad = tiny_config();
  bad.use_conv3d = true;
  CHECK_THROWS_AS(
      transnet::build_input(u.pose_r, u.pose_l, bad, &scene, Domain::mocap),
      ConfigError);
}

TEST_CASE("heatmap inputs are bit-identical across appearance domains") {
  const auto scene = make_scene(3);
  const auto u = transnet::to_union(scene, 256);
  for (InputRepr repr : {InputRepr::hm25d, InputRepr::hm2d}) {
    TransNetConfig cfg = tiny_config(repr);
    const ad::Tensor a =
        transnet::build_input(u.pose_r, u.pose_l, cfg, &scene, Domain::mocap);
    const ad::Tensor b =
        transnet::build_input(u.pose_r, u.pose_l, cfg, &scene, Domain::itw_B);
    for (std::int64_t i = 0; i < a.size(); ++i)
      CHECK(a.value()[static_cast<size_t>(i)] ==
            b.value()[static_cast<size_t>(i)]);
  }

  // Image inputs do depend on the rendering domain.
  TransNetConfig img = tiny_config(InputRepr::image);
  const ad::Tensor ia =
      transnet::build_input(u.pose_r, u.pose_l, img, &scene, Domain::mocap);
  const ad::Tensor ib =
      transnet::build_input(u.pose_r, u.pose_l, img, &scene, Domain::itw_B);
  bool differs = false;
  for (std::int64_t i = 0; i < ia.size(); ++i)
    differs = differs || ia.value()[static_cast<size_t>(i)] !=
                             ib.value()[static_cast<size_t>(i)];
  CHECK(differs);
}

TEST_CASE("untrained network outputs exactly zero translation") {
  for (Head head : {Head::wrist, Head::gap, Head::all_joints, Head::fc}) {
    TransNetConfig cfg = tiny_config(InputRepr::hm25d, head);
    transnet::TransNet net(cfg, 99);
    const auto scene = make_scene(4);
    const std::array<int, 1> idx{0};
    const std::array<synth::SceneRecord, 1> scenes{scene};
    auto batch = transnet::build_batch(scenes, idx, cfg, std::nullopt);
    const ad::Tensor out = net.forward(batch.input, batch.points);
    CHECK(out.value()[0] == 0.0);
    CHECK(out.value()[1] == 0.0);
    CHECK(out.value()[2] == 0.0);
  }
}

TEST_CASE("head contracts: gap ignores positions, wrist does not") {
  TransNetConfig cfg = tiny_config(InputRepr::hm25d, Head::gap);
  transnet::TransNet gap_net(cfg, 5);
  // Give the zero head nonzero weights so outputs respond to features.
  for (auto& p : gap_net.params()) {
    rng::Rng r(7);
    for (auto& v : p.t.mutable_value())
      if (v == 0.0) v = r.normal() * 0.2;
  }

  const auto scene = make_scene(5);
  const std::array<int, 1> idx{0};
  const std::array<synth::SceneRecord, 1> scenes{scene};
  auto batch = transnet::build_batch(scenes, idx, cfg, std::nullopt);

  auto moved = batch.points;
  moved[0].wrists[0] = {batch.points[0].wrists[0].x + 80,
                        batch.points[0].wrists[0].y + 40};
  const ad::Tensor a = gap_net.forward(batch.input, batch.points);
  const ad::Tensor b = gap_net.forward(batch.input, moved);
  for (int i = 0; i < 3; ++i)
    CHECK(a.value()[static_cast<size_t>(i)] == b.value()[static_cast<size_t>(i)]);

  TransNetConfig wcfg = tiny_config(InputRepr::hm25d, Head::wrist);
  transnet::TransNet wrist_net(wcfg, 5);
  for (auto& p : wrist_net.params()) {
    rng::Rng r(8);
    for (auto& v : p.t.mutable_value())
      if (v == 0.0) v = r.normal() * 0.2;
  }
  const ad::Tensor wa = wrist_net.forward(batch.input, batch.points);
  const ad::Tensor wb = wrist_net.forward(batch.input, moved);
  bool differs = false;
  for (int i = 0; i < 3; ++i)
    differs = differs || wa.value()[static_cast<size_t>(i)] !=
                             wb.value()[static_cast<size_t>(i)];
  CHECK(differs);
}

TEST_CASE("gap pooling is invariant to spatial permutation of cells") {
  rng::Rng rng(9);
  std::vector<double> vals(2 * 3 * 4 * 4);
  for (auto& v : vals) v = rng.normal();
  ad::Tensor f = ad::Tensor::from_data({2, 3, 4, 4}, vals);

  // Reverse the spatial cells (a permutation).
  std::vector<double> perm(vals.size());
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16; ++i)
        perm[(static_cast<size_t>(n) * 3 + c) * 16 + i] =
            vals[(static_cast<size_t>(n) * 3 + c) * 16 + (15 - i)];
  ad::Tensor g = ad::Tensor::from_data({2, 3, 4, 4}, perm);

  const ad::Tensor at = ad::global_avg_pool(f);
  const ad::Tensor bt = ad::global_avg_pool(g);
  const auto a = at.value();
  const auto b = bt.value();
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("gradient of the output flows into the input heatmap") {
  TransNetConfig cfg = tiny_config();
  transnet::TransNet net(cfg, 11);
  for (auto& p : net.params()) {
    rng::Rng r(12);
    for (auto& v : p.t.mutable_value())
      if (v == 0.0) v = r.normal() * 0.2;
  }

  const auto scene = make_scene(6);
  const std::array<int, 1> idx{0};
  const std::array<synth::SceneRecord, 1> scenes{scene};
  auto batch = transnet::build_batch(scenes, idx, cfg, std::nullopt);
  ad::Tensor input = ad::Tensor::from_data(
      batch.input.shape(),
      std::vector<double>(batch.input.value().begin(),
                          batch.input.value().end()),
      true);

  auto build = [&]() {
    const ad::Tensor out = net.forward(input, batch.points);
    return ad::sum(out);
  };
  ad::Tensor loss = build();
  ad::backward(loss);
  const auto grad = input.grad();

  const double h = 1e-5;
  rng::Rng pick(13);
  for (int rep = 0; rep < 12; ++rep) {
    const int i = pick.uniform_int(0, static_cast<int>(input.size()) - 1);
    const double saved = input.value()[static_cast<size_t>(i)];
    input.mutable_value()[static_cast<size_t>(i)] = saved + h;
    const double up = build().item();
    input.mutable_value()[static_cast<size_t>(i)] = saved - h;
    const double dn = build().item();
    input.mutable_value()[static_cast<size_t>(i)] = saved;
    const double fd = (up - dn) / (2 * h);
    CHECK(std::abs(grad[static_cast<size_t>(i)] - fd) <
          1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("training memorizes a singleton dataset") {
  TransNetConfig cfg = tiny_config();
  transnet::TransNet net(cfg, 21);

  const std::vector<synth::SceneRecord> one{make_scene(7)};
  transnet::TrainOptions opts;
  opts.epochs = 500;  // one step per epoch on a singleton
  opts.batch_size = 1;
  opts.seed = 21;
  opts.adam.lr = 1e-2;
  opts.adam.drop_epoch = 1000000;
  const auto result = transnet::train(net, one, one, opts);
  CHECK(result.final_heldout_mrrpe < 1.0);  // mm
}

TEST_CASE("training is deterministic given the seed") {
  auto run = [](std::uint64_t seed) {
    TransNetConfig cfg = tiny_config();
    transnet::TransNet net(cfg, seed);
    std::vector<synth::SceneRecord> scenes;
    for (std::uint64_t i = 0; i < 24; ++i) scenes.push_back(make_scene(i, 81));
    transnet::TrainOptions opts;
    opts.epochs = 2;
    opts.batch_size = 8;
    opts.seed = seed;
    opts.adam.lr = 1e-3;
    const auto result = transnet::train(net, scenes, scenes, opts);
    return result;
  };
  const auto a = run(33);
  const auto b = run(33);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].mrrpe_mm == b.history[i].mrrpe_mm);
    CHECK(a.history[i].loss == b.history[i].loss);
  }
}

TEST_CASE("weak supervision requires itw scenes") {
  TransNetConfig cfg = tiny_config();
  cfg.weak_supervision = true;
  transnet::TransNet net(cfg, 41);
  std::vector<synth::SceneRecord> scenes;
  for (std::uint64_t i = 0; i < 8; ++i) scenes.push_back(make_scene(i, 82));
  transnet::TrainOptions opts;
  opts.epochs = 1;
  opts.batch_size = 4;
  CHECK_THROWS_AS(transnet::train(net, scenes, scenes, opts), ConfigError);
}

TEST_CASE("weak supervision trains on mixed batches") {
  TransNetConfig cfg = tiny_config();
  cfg.weak_supervision = true;
  transnet::TransNet net(cfg, 43);

  synth::SynthConfig scfg;
  scfg.itw_fraction = 0.5;
  scfg.itw_single_hand_prob = 0.0;
  std::vector<synth::SceneRecord> scenes;
  for (std::uint64_t i = 0; i < 16; ++i)
    scenes.push_back(synth::sample_scene(83, i, scfg));

  transnet::TrainOptions opts;
  opts.epochs = 2;
  opts.batch_size = 8;
  opts.seed = 43;
  opts.adam.lr = 1e-3;
  opts.itw_g_noise_sigma = 0.05;
  const auto result = transnet::train(net, scenes, scenes, opts);
  CHECK(result.history.size() == 4);
  CHECK(std::isfinite(result.final_train_loss));
}

TEST_CASE("evaluation skips scenes with an invisible hand") {
  TransNetConfig cfg = tiny_config();
  transnet::TransNet net(cfg, 44);

  synth::SynthConfig scfg;
  scfg.itw_fraction = 1.0;
  scfg.itw_single_hand_prob = 1.0;
  std::vector<synth::SceneRecord> scenes;
  for (std::uint64_t i = 0; i < 4; ++i)
    scenes.push_back(synth::sample_scene(84, i, scfg));
  scenes.push_back(make_scene(0, 85));

  const auto res = transnet::evaluate_mrrpe(net, scenes);
  CHECK(res.skipped == 4);
  CHECK(res.evaluated == 1);
}

TEST_CASE("predict-zero baseline equals the mean translation magnitude") {
  std::vector<synth::SceneRecord> scenes;
  for (std::uint64_t i = 0; i < 6; ++i) scenes.push_back(make_scene(i, 86));
  double acc = 0;
  for (const auto& s : scenes) acc += geom::norm(s.t_gt) * 1000;
  CHECK(transnet::predict_zero_baseline_mm(scenes) ==
        doctest::Approx(acc / 6).epsilon(1e-12));
}

TEST_CASE("depth shifts that keep the relative depth leave t_gt unchanged") {
  synth::SceneRecord s = make_scene(9, 87);
  synth::SceneRecord shifted = s;
  shifted.g_r.z += 0.05;
  synth::derive_scene(shifted);
  CHECK(shifted.t_gt.x == s.t_gt.x);
  CHECK(shifted.t_gt.z == s.t_gt.z);
  // The appearance in the union space changes (hands look smaller).
  CHECK(shifted.box_r.size.x < s.box_r.size.x);
}
