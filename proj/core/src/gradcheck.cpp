#include "iw/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include "iw/errors.hpp"
#include "iw/hand_model.hpp"
#include "iw/heatmap.hpp"
#include "iw/losses.hpp"
#include "iw/ops.hpp"
#include "iw/rng.hpp"
#include "iw/shnet.hpp"
#include "iw/transnet.hpp"

namespace iw::gradcheck {

namespace {

constexpr double kStep = 1e-5;
constexpr double kRelTol = 1e-4;
constexpr double kFloor = 1e-7;  // finite-difference noise floor

struct Checker {
  Report& report;
  Item item;

  explicit Checker(Report& r, std::string name) : report(r) {
    item.name = std::move(name);
  }
  ~Checker() { report.items.push_back(item); }

  // Scalar-valued graph over a set of leaf tensors; compares d(scalar)/d(leaf)
  // against central differences for the chosen entries of each leaf.
  using Fn = std::function<ad::Tensor()>;

  void check(Fn build, std::vector<ad::Tensor> leaves,
             const std::vector<std::vector<int>>* entry_sets = nullptr) {
    ++item.cases;
    ad::Tensor loss = build();
    for (auto& l : leaves) l.zero_grad();
    ad::backward(loss);

    for (size_t li = 0; li < leaves.size(); ++li) {
      auto& leaf = leaves[li];
      const auto grad = leaf.grad();
      std::vector<int> entries;
      if (entry_sets && li < entry_sets->size() && !(*entry_sets)[li].empty()) {
        entries = (*entry_sets)[li];
      } else {
        entries.resize(static_cast<size_t>(leaf.size()));
        for (int i = 0; i < leaf.size(); ++i) entries[static_cast<size_t>(i)] = i;
      }
      for (int e : entries) {
        const double saved = leaf.value()[static_cast<size_t>(e)];
        leaf.mutable_value()[static_cast<size_t>(e)] = saved + kStep;
        const double up = build().item();
        leaf.mutable_value()[static_cast<size_t>(e)] = saved - kStep;
        const double dn = build().item();
        leaf.mutable_value()[static_cast<size_t>(e)] = saved;
        const double fd = (up - dn) / (2 * kStep);
        const double an = grad[static_cast<size_t>(e)];
        const double err =
            std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1.0});
        ++item.entries;
        item.worst_err = std::max(item.worst_err, err);
        if (std::abs(an - fd) >
            kRelTol * std::max(std::abs(an), std::abs(fd)) + kFloor)
          ++item.failures;
      }
    }
  }
};

ad::Tensor rand_tensor(rng::Rng& rng, ad::Shape shape, double scale = 1.0,
                       bool requires_grad = true) {
  std::vector<double> data(static_cast<size_t>(ad::shape_size(shape)));
  for (auto& v : data) v = rng.normal() * scale;
  return ad::Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Fixed random projection to a scalar so every output entry is exercised.
ad::Tensor to_scalar(const ad::Tensor& t, rng::Rng& rng) {
  std::vector<double> w(static_cast<size_t>(t.size()));
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  ad::Tensor weights =
      ad::Tensor::from_data(t.shape(), std::move(w));
  return ad::sum(ad::mul(t, weights));
}

std::vector<int> sample_entries(rng::Rng& rng, std::int64_t size, int count) {
  std::vector<int> out;
  for (int i = 0; i < count; ++i)
    out.push_back(rng.uniform_int(0, static_cast<int>(size) - 1));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void check_elementwise_graph(Report& report, rng::Rng& rng, int cases) {
  Checker c(report, "elementwise_graph_depth5");
  for (int i = 0; i < cases; ++i) {
    ad::Tensor a = rand_tensor(rng, {3, 4});
    ad::Tensor b = rand_tensor(rng, {4});  // broadcast over the leading dim
    ad::Tensor d = rand_tensor(rng, {3, 4});
    rng::Rng wrng(rng.next_u64());
    c.check(
        [&]() {
          ad::Tensor x = ad::add(a, b);            // 1
          x = ad::mul(x, d);                       // 2
          x = ad::relu(ad::add_scalar(x, 0.05));   // 3, 4
          x = ad::sub(x, ad::scalar_mul(a, 0.3));  // 5
          rng::Rng local = wrng;
          return to_scalar(x, local);
        },
        {a, b, d});
  }
}

void check_matmul(Report& report, rng::Rng& rng, int cases) {
  Checker c(report, "matmul");
  for (int i = 0; i < cases; ++i) {
    const int m = rng.uniform_int(1, 4), k = rng.uniform_int(1, 4),
              n = rng.uniform_int(1, 4);
    ad::Tensor a = rand_tensor(rng, {m, k});
    ad::Tensor b = rand_tensor(rng, {k, n});
    rng::Rng wrng(rng.next_u64());
    c.check(
        [&]() {
          rng::Rng local = wrng;
          return to_scalar(ad::matmul(a, b), local);
        },
        {a, b});
  }
}

void check_softmax(Report& report, rng::Rng& rng, int cases) {
  Checker c(report, "softmax");
  for (int i = 0; i < cases; ++i) {
    ad::Tensor a = rand_tensor(rng, {rng.uniform_int(1, 3), rng.uniform_int(2, 6)});
    rng::Rng wrng(rng.next_u64());
    c.check(
        [&]() {
          rng::Rng local = wrng;
          return to_scalar(ad::softmax(a), local);
        },
        {a});
  }
}

void check_shape_ops(Report& report, rng::Rng& rng, int cases) {
  Checker c(report, "reshape_concat_slice");
  for (int i = 0; i < cases; ++i) {
    ad::Tensor a = rand_tensor(rng, {2, 6});
    ad::Tensor b = rand_tensor(rng, {2, 3});
    rng::Rng wrng(rng.next_u64());
    c.check(
        [&]() {
          const ad::Tensor parts[] = {ad::reshape(a, {2, 6}), b};
          ad::Tensor x = ad::concat(parts, 1);   // 2 x 9
          x = ad::slice(x, 1, 2, 5);             // 2 x 5
          x = ad::reshape(x, {10});
          rng::Rng local = wrng;
          return to_scalar(x, local);
        },
        {a, b});
  }
}

void check_conv2d(Report& report, rng::Rng& rng, int cases) {
  Checker c(report, "conv2d");
  for (int i = 0; i < cases; ++i) {
    const int stride = 1 + (i % 2), pad = i % 2;
    const int cin = rng.uniform_int(1, 3), cout = rng.uniform_int(1, 3);
    const int hw = stride == 2 ? 6 : 5;
    ad::Tensor x = rand_tensor(rng, {2, cin, hw, hw});
    ad::Tensor k = rand_tensor(rng, {cout, cin, 3, 3});
    ad::Tensor b = rand_tensor(rng, {cout});
    rng::Rng wrng(rng.next_u64());
    c.check(
        [&]() {
          rng::Rng local = wrng;
          return to_scalar(ad::conv2d(x, k, b, stride, pad), local);
        },
        {x, k, b});
  }
}

void check_l1(Report& report, rng::Rng& rng, int cases) {
  Checker c(report, "l1_loss");
  for (int i = 0; i < cases; ++i) {
    ad::Tensor a = rand_tensor(rng, {3, 3});
    ad::Tensor b = rand_tensor(rng, {3, 3});
    c.check([&]() { return ad::l1_loss(a, b); }, {a, b});
  }
}

void check_gap(Report& report, rng::Rng& rng, int cases) {
  Checker c(report, "global_avg_pool");
  for (int i = 0; i < cases; ++i) {
    ad::Tensor x = rand_tensor(rng, {2, 3, 4, 4});
    rng::Rng wrng(rng.next_u64());
    c.check(
        [&]() {
          rng::Rng local = wrng;
          return to_scalar(ad::global_avg_pool(x), local);
        },
        {x});
  }
}

void check_sample_features(Report& report, rng::Rng& rng, int cases) {
  Checker c(report, "bilinear_sample_features");
  for (int i = 0; i < cases; ++i) {
    ad::Tensor f = rand_tensor(rng, {2, 3, 5, 5});
    std::vector<double> pos;
    for (int p = 0; p < 2 * 3 * 2; ++p) pos.push_back(rng.uniform(0.3, 3.7));
    ad::Tensor positions = ad::Tensor::from_data({2, 3, 2}, std::move(pos), true);
    rng::Rng wrng(rng.next_u64());
    c.check(
        [&]() {
          rng::Rng local = wrng;
          return to_scalar(ad::sample_features(f, positions), local);
        },
        {f, positions});
  }
}

void check_soft_argmax(Report& report, rng::Rng& rng, int cases) {
  {
    Checker c(report, "soft_argmax_3d");
    for (int i = 0; i < cases; ++i) {
      ad::Tensor hm = rand_tensor(rng, {2, 3, 4, 4}, 1.5);
      rng::Rng wrng(rng.next_u64());
      c.check(
          [&]() {
            rng::Rng local = wrng;
            return to_scalar(ad::soft_argmax_volume(hm), local);
          },
          {hm});
    }
  }
  {
    Checker c(report, "soft_argmax_2d");
    for (int i = 0; i < cases; ++i) {
      ad::Tensor hm = rand_tensor(rng, {2, 5, 4}, 1.5);
      rng::Rng wrng(rng.next_u64());
      c.check(
          [&]() {
            rng::Rng local = wrng;
            return to_scalar(ad::soft_argmax_grid(hm), local);
          },
          {hm});
    }
  }
}

void check_projection(Report& report, rng::Rng& rng, int cases) {
  {
    Checker c(report, "project_points");
    for (int i = 0; i < cases; ++i) {
      std::vector<double> pts;
      for (int p = 0; p < 4; ++p) {
        pts.push_back(rng.uniform(-0.2, 0.2));
        pts.push_back(rng.uniform(-0.2, 0.2));
        pts.push_back(rng.uniform(0.3, 0.9));
      }
      ad::Tensor xyz = ad::Tensor::from_data({4, 3}, std::move(pts), true);
      rng::Rng wrng(rng.next_u64());
      c.check(
          [&]() {
            rng::Rng local = wrng;
            return to_scalar(ad::project_points(xyz, 1500, 1500, 256, 256),
                             local);
          },
          {xyz});
    }
  }
  {
    Checker c(report, "affine_points");
    for (int i = 0; i < cases; ++i) {
      ad::Tensor pts = rand_tensor(rng, {5, 2}, 10.0);
      geom::Affine2D t{{rng.uniform(0.5, 2.0), rng.uniform(-0.2, 0.2),
                        rng.uniform(-5, 5), rng.uniform(-0.2, 0.2),
                        rng.uniform(0.5, 2.0), rng.uniform(-5, 5)}};
      rng::Rng wrng(rng.next_u64());
      c.check(
          [&]() {
            rng::Rng local = wrng;
            return to_scalar(ad::affine_points(pts, t), local);
          },
          {pts});
    }
  }
}

void check_hand_forward(Report& report, rng::Rng& rng, int cases) {
  {
    Checker c(report, "hand_forward_axis_angle");
    for (int i = 0; i < cases; ++i) {
      ad::Tensor theta = rand_tensor(rng, {hand::kBones, 3}, 0.4);
      ad::Tensor beta = rand_tensor(rng, {10}, 1.0);
      const auto h = i % 2 ? hand::Handedness::left : hand::Handedness::right;
      rng::Rng wrng(rng.next_u64());
      c.check(
          [&]() {
            rng::Rng local = wrng;
            return to_scalar(hand::hand_forward_op(theta, beta, h), local);
          },
          {theta, beta});
    }
  }
  {
    Checker c(report, "hand_forward_6d");
    for (int i = 0; i < cases; ++i) {
      // 6-D inputs near well-conditioned rotations.
      std::vector<double> t6(static_cast<size_t>(hand::kBones) * 6);
      for (int k = 0; k < hand::kBones; ++k) {
        const geom::Mat3 m = geom::axis_angle_to_matrix(
            {{rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
              rng.uniform(-0.6, 0.6)}});
        const geom::Rot6D r6 = geom::matrix_to_rot6d(m);
        for (int j = 0; j < 6; ++j)
          t6[static_cast<size_t>(k) * 6 + j] =
              r6.a[static_cast<size_t>(j)] + rng.uniform(-0.05, 0.05);
      }
      ad::Tensor theta6 =
          ad::Tensor::from_data({hand::kBones, 6}, std::move(t6), true);
      ad::Tensor beta = rand_tensor(rng, {10}, 1.0);
      rng::Rng wrng(rng.next_u64());
      c.check(
          [&]() {
            rng::Rng local = wrng;
            return to_scalar(
                hand::hand_forward_6d_op(theta6, beta, hand::Handedness::right),
                local);
          },
          {theta6, beta});
    }
  }
}

void check_weak_supervision(Report& report, rng::Rng& rng, int cases) {
  Checker c(report, "weak_supervision_loss");
  for (int i = 0; i < cases; ++i) {
    std::vector<geom::Vec3> jr, jl;
    std::vector<geom::Vec2> gr, gl;
    for (int j = 0; j < 6; ++j) {
      jr.push_back({rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                    rng.uniform(-0.05, 0.05)});
      jl.push_back({rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                    rng.uniform(-0.05, 0.05)});
      gr.push_back({rng.uniform(0, 256), rng.uniform(0, 256)});
      gl.push_back({rng.uniform(0, 256), rng.uniform(0, 256)});
    }
    Camera cam;
    geom::Affine2D to_union{{0.7, 0, 20, 0, 0.7, -10}};
    ad::Tensor g = ad::Tensor::from_data(
        {3}, {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
              rng.uniform(0.4, 0.7)},
        true);
    ad::Tensor t = ad::Tensor::from_data(
        {3}, {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
              rng.uniform(-0.1, 0.1)},
        true);
    c.check(
        [&]() {
          return losses::weak_supervision_loss(jr, jl, g, t, cam, gr, gl,
                                               to_union, true);
        },
        {g, t});
  }
}

transnet::TransNetConfig tiny_transnet_config(transnet::Head head,
                                              transnet::InputRepr repr) {
  transnet::TransNetConfig cfg;
  cfg.input_repr = repr;
  cfg.head = head;
  cfg.depth = 2;
  cfg.height = cfg.width = 8;
  cfg.channels = 4;
  cfg.conv_widths = {3, 4};
  cfg.union_res = 64;
  cfg.z_range = 0.4;
  cfg.fc_hidden = 16;
  return cfg;
}

void check_transnet_heads(Report& report, rng::Rng& rng, int cases) {
  const std::pair<transnet::Head, const char*> heads[] = {
      {transnet::Head::wrist, "transnet_wrist_head"},
      {transnet::Head::gap, "transnet_gap_head"},
      {transnet::Head::all_joints, "transnet_all_joints_head"},
      {transnet::Head::fc, "transnet_fc_head"},
  };
  for (const auto& [head, name] : heads) {
    Checker c(report, name);
    const auto cfg = tiny_transnet_config(head, transnet::InputRepr::hm25d);
    for (int i = 0; i < cases; ++i) {
      transnet::TransNet net(cfg, rng.next_u64());
      // Break the zero initialization so gradients reach every layer.
      for (auto& p : net.params())
        for (auto& v : p.t.mutable_value())
          if (v == 0.0) v = rng.normal() * 0.15;

      const int input_dim = head == transnet::Head::fc
                                ? 2 * hand::kJoints * 3
                                : cfg.input_channels();
      ad::Tensor input =
          head == transnet::Head::fc
              ? rand_tensor(rng, {1, input_dim}, 0.5)
              : rand_tensor(rng, {1, input_dim, cfg.height, cfg.width}, 0.5);
      transnet::SamplePoints pts;
      pts.wrists = {geom::Vec2{rng.uniform(8, 56), rng.uniform(8, 56)},
                    geom::Vec2{rng.uniform(8, 56), rng.uniform(8, 56)}};
      for (auto& p : pts.joints)
        p = {rng.uniform(8, 56), rng.uniform(8, 56)};
      const transnet::SamplePoints pset[] = {pts};

      std::vector<ad::Tensor> leaves = {input};
      std::vector<std::vector<int>> entries = {
          sample_entries(rng, input.size(), 24)};
      for (auto& p : net.params()) {
        leaves.push_back(p.t);
        entries.push_back(sample_entries(rng, p.t.size(), 12));
      }
      rng::Rng wrng(rng.next_u64());
      c.check(
          [&]() {
            rng::Rng local = wrng;
            return to_scalar(net.forward(input, pset), local);
          },
          leaves, &entries);
    }
  }
}

void check_shnet(Report& report, rng::Rng& rng, int cases) {
  Checker c(report, "shnet_outputs_vs_backbone");
  shnet::SHNetConfig cfg;
  cfg.obs_res = 64;
  cfg.widths = {2, 3, 3, 4, 4};
  cfg.feat_channels = 4;
  for (int i = 0; i < cases; ++i) {
    shnet::SHNetLite net(cfg, rng.next_u64());
    for (auto& p : net.params())
      for (auto& v : p.t.mutable_value())
        if (v == 0.0) v = rng.normal() * 0.1;
    ad::Tensor obs = rand_tensor(rng, {1, 3, 64, 64}, 0.4, false);
    PixelSpace space{PixelSpace::Kind::single_hand_crop, false, 64, 64,
                     {{32, 32}, {64, 64}}};

    std::vector<ad::Tensor> leaves;
    std::vector<std::vector<int>> entries;
    for (auto& p : net.params()) {
      leaves.push_back(p.t);
      entries.push_back(sample_entries(rng, p.t.size(), 6));
    }
    rng::Rng wrng(rng.next_u64());
    c.check(
        [&]() {
          const PixelSpace spaces[] = {space};
          auto outs = net.forward(obs, spaces);
          rng::Rng local = wrng;
          ad::Tensor s = to_scalar(outs[0].pose_px, local);
          s = ad::add(s, to_scalar(outs[0].theta_6d, local));
          s = ad::add(s, to_scalar(outs[0].beta, local));
          s = ad::add(s, to_scalar(outs[0].g, local));
          return s;
        },
        leaves, &entries);
  }
}

}  // namespace

bool Report::all_ok() const {
  for (const auto& i : items)
    if (i.failures > 0) return false;
  return true;
}

Report run_all(std::uint64_t seed, int cases_per_op) {
  Report report;
  rng::Rng rng(seed);
  check_elementwise_graph(report, rng, cases_per_op);
  check_matmul(report, rng, cases_per_op);
  check_softmax(report, rng, cases_per_op);
  check_shape_ops(report, rng, cases_per_op);
  check_conv2d(report, rng, cases_per_op);
  check_l1(report, rng, cases_per_op);
  check_gap(report, rng, cases_per_op);
  check_sample_features(report, rng, cases_per_op);
  check_soft_argmax(report, rng, cases_per_op);
  check_projection(report, rng, cases_per_op);
  check_hand_forward(report, rng, cases_per_op);
  check_weak_supervision(report, rng, cases_per_op);
  check_transnet_heads(report, rng, std::max(3, cases_per_op / 4));
  check_shnet(report, rng, std::max(2, cases_per_op / 10));
  return report;
}

void print(const Report& report, std::ostream& os) {
  for (const auto& i : report.items) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-32s cases=%-3d entries=%-6d worst=%.3e %s\n",
                  i.name.c_str(), i.cases, i.entries, i.worst_err,
                  i.failures ? "FAIL" : "ok");
    os << buf;
  }
}

}  // namespace iw::gradcheck
