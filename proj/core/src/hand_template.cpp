#include <cmath>
#include <mutex>

#include "iw/hand_model.hpp"

namespace iw::hand {

namespace {

using geom::Vec3;

struct FingerSpec {
  const char* name;
  Vec3 st0, st1, st2, tip;  // ring stations (mcp/pip/dip or cmc/mcp/ip) + apex
  double radius;
  int bone0;     // first of the finger's three bones
  double spread;  // lateral shape-direction sign/scale
};

constexpr double kPalmTopY = 0.075;

const FingerSpec kFingers[5] = {
    {"thumb", {0.022, 0.020, -0.006}, {0.042, 0.042, -0.010},
     {0.055, 0.060, -0.012}, {0.066, 0.075, -0.014}, 0.0095, 1, 1.5},
    {"index", {0.030, 0.082, 0.0}, {0.033, 0.110, 0.0}, {0.034, 0.130, 0.0},
     {0.035, 0.147, 0.0}, 0.0080, 4, 1.0},
    {"middle", {0.008, 0.086, 0.0}, {0.008, 0.116, 0.0}, {0.008, 0.137, 0.0},
     {0.008, 0.150, 0.0}, 0.0085, 7, 0.0},
    {"ring", {-0.012, 0.084, 0.0}, {-0.013, 0.112, 0.0}, {-0.014, 0.132, 0.0},
     {-0.015, 0.147, 0.0}, 0.0080, 10, -1.0},
    {"pinky", {-0.030, 0.076, 0.0}, {-0.032, 0.098, 0.0},
     {-0.033, 0.113, 0.0}, {-0.034, 0.126, 0.0}, 0.0070, 13, -2.0},
};

Vec3 normalize(const Vec3& v) {
  const double n = geom::norm(v);
  return v * (1.0 / n);
}

void set_weights(VertexWeights& vw, std::initializer_list<std::pair<int, double>> ws) {
  vw.count = 0;
  for (const auto& [b, w] : ws) {
    vw.bone[static_cast<size_t>(vw.count)] = b;
    vw.w[static_cast<size_t>(vw.count)] = w;
    ++vw.count;
  }
}

HandTemplate build_right_template() {
  HandTemplate t;
  t.handedness = Handedness::right;
  t.parent = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 0, 10, 11, 0, 13, 14};

  t.bone_anchors.assign(static_cast<size_t>(kBones) * kVerts, 0.0);
  t.joint_regressor.assign(static_cast<size_t>(kJoints) * kVerts, 0.0);

  std::array<Vec3, kVerts> radial{};  // unit radial offset for ring verts
  std::array<int, kVerts> finger_of{};
  finger_of.fill(-1);

  int vi = 0;
  std::array<int, 5> apex{};

  // ---- fingers: 4 rings of 4 verts + 1 apex each -------------------------
  for (int f = 0; f < 5; ++f) {
    const FingerSpec& fs = kFingers[f];
    const Vec3 stations[4] = {fs.st0, fs.st1, fs.st2, fs.tip};
    const int ring_base = vi;
    for (int s = 0; s < 4; ++s) {
      // Ring plane normal: direction toward the next station (tip reuses the
      // last segment direction). Ring verts average exactly to the station.
      const Vec3 axis = s < 3 ? normalize(stations[s + 1] - stations[s])
                              : normalize(stations[3] - stations[2]);
      Vec3 u = cross(axis, Vec3{0, 0, 1});
      if (geom::norm(u) < 1e-6) u = Vec3{1, 0, 0};
      u = normalize(u);
      const Vec3 w = cross(axis, u);
      const Vec3 center =
          s < 3 ? stations[s] : stations[2] + (stations[3] - stations[2]) * 0.75;
      const Vec3 offsets[4] = {u, w, -u, -w};
      for (int q = 0; q < 4; ++q) {
        t.vertices[static_cast<size_t>(vi)] = center + offsets[q] * fs.radius;
        radial[static_cast<size_t>(vi)] = offsets[q];
        finger_of[static_cast<size_t>(vi)] = f;
        const int b0 = fs.bone0, b1 = fs.bone0 + 1, b2 = fs.bone0 + 2;
        switch (s) {
          case 0: set_weights(t.skin[static_cast<size_t>(vi)], {{b0, 0.6}, {0, 0.4}}); break;
          case 1: set_weights(t.skin[static_cast<size_t>(vi)], {{b0, 0.5}, {b1, 0.5}}); break;
          case 2: set_weights(t.skin[static_cast<size_t>(vi)], {{b1, 0.5}, {b2, 0.5}}); break;
          default: set_weights(t.skin[static_cast<size_t>(vi)], {{b2, 1.0}}); break;
        }
        ++vi;
      }
    }
    // apex
    t.vertices[static_cast<size_t>(vi)] = fs.tip;
    finger_of[static_cast<size_t>(vi)] = f;
    set_weights(t.skin[static_cast<size_t>(vi)], {{fs.bone0 + 2, 1.0}});
    apex[static_cast<size_t>(f)] = vi;
    ++vi;

    // Anchors: each of the finger's three skeleton joints is the mean of its
    // station ring (stations 0..2).
    for (int s = 0; s < 3; ++s)
      for (int q = 0; q < 4; ++q)
        t.bone_anchors[static_cast<size_t>(fs.bone0 + s) * kVerts + ring_base +
                       4 * s + q] = 0.25;

    // Cylinder walls between consecutive rings, then the apex cap.
    for (int s = 0; s < 3; ++s)
      for (int q = 0; q < 4; ++q) {
        const int a = ring_base + 4 * s + q;
        const int b = ring_base + 4 * s + (q + 1) % 4;
        const int c = a + 4, d = b + 4;
        t.faces.push_back({a, c, b});
        t.faces.push_back({b, c, d});
      }
    for (int q = 0; q < 4; ++q) {
      const int a = ring_base + 12 + q;
      const int b = ring_base + 12 + (q + 1) % 4;
      t.faces.push_back({a, apex[static_cast<size_t>(f)], b});
    }
  }

  // ---- palm: two 4x4 grid layers ------------------------------------------
  const double grid_x[4] = {-0.030, -0.010, 0.010, 0.030};
  const double grid_y[4] = {0.008, 0.032, 0.056, 0.080};
  const int back_base = vi;
  for (int layer = 0; layer < 2; ++layer) {
    const double z = layer == 0 ? 0.006 : -0.008;
    for (int gy = 0; gy < 4; ++gy)
      for (int gx = 0; gx < 4; ++gx) {
        t.vertices[static_cast<size_t>(vi)] = {grid_x[gx], grid_y[gy], z};
        // Rows near the knuckles pick up a little of the closest finger base.
        const int nearest_b0 = gx >= 2 ? 4 : (gx == 1 ? 7 : (grid_x[gx] < -0.02 ? 13 : 10));
        if (gy == 3)
          set_weights(t.skin[static_cast<size_t>(vi)], {{0, 0.65}, {nearest_b0, 0.35}});
        else if (gy == 2)
          set_weights(t.skin[static_cast<size_t>(vi)], {{0, 0.85}, {nearest_b0, 0.15}});
        else
          set_weights(t.skin[static_cast<size_t>(vi)], {{0, 1.0}});
        ++vi;
      }
  }
  const int palm_base = back_base + 16;
  for (int layer = 0; layer < 2; ++layer) {
    const int base = layer == 0 ? back_base : palm_base;
    for (int gy = 0; gy < 3; ++gy)
      for (int gx = 0; gx < 3; ++gx) {
        const int a = base + 4 * gy + gx, b = a + 1, c = a + 4, d = a + 5;
        if (layer == 0) {
          t.faces.push_back({a, b, c});
          t.faces.push_back({b, d, c});
        } else {
          t.faces.push_back({a, c, b});
          t.faces.push_back({b, c, d});
        }
      }
  }
  for (int gx = 0; gx < 3; ++gx) {  // distal and proximal walls
    int a = back_base + 12 + gx, b = a + 1;
    int c = palm_base + 12 + gx, d = c + 1;
    t.faces.push_back({a, b, c});
    t.faces.push_back({b, d, c});
    a = back_base + gx; b = a + 1; c = palm_base + gx; d = c + 1;
    t.faces.push_back({a, c, b});
    t.faces.push_back({b, c, d});
  }
  for (int gy = 0; gy < 3; ++gy) {  // side walls
    int a = back_base + 4 * gy, c = a + 4;
    int b = palm_base + 4 * gy, d = b + 4;
    t.faces.push_back({a, b, c});
    t.faces.push_back({b, d, c});
    a = back_base + 4 * gy + 3; c = a + 4;
    b = palm_base + 4 * gy + 3; d = b + 4;
    t.faces.push_back({a, c, b});
    t.faces.push_back({b, c, d});
  }

  // ---- wrist ring (6 verts, mean exactly the origin) ----------------------
  const int wrist_base = vi;
  const double wr_x[6] = {0.030, 0.015, -0.015, -0.030, -0.015, 0.015};
  const double wr_z[6] = {0.0, 0.0086603, 0.0086603, 0.0, -0.0086603, -0.0086603};
  for (int q = 0; q < 6; ++q) {
    t.vertices[static_cast<size_t>(vi)] = {wr_x[q], 0.0, wr_z[q]};
    set_weights(t.skin[static_cast<size_t>(vi)], {{0, 1.0}});
    t.bone_anchors[0 * kVerts + vi] = 1.0 / 6.0;
    ++vi;
  }
  for (int q = 0; q < 6; ++q)
    t.faces.push_back({wrist_base + q, wrist_base + (q + 1) % 6,
                       back_base /* arbitrary palm vert as fan center */});

  // ---- thumb mound ---------------------------------------------------------
  const int mound_base = vi;
  const Vec3 mound_center{0.018, 0.012, -0.004};
  for (int q = 0; q < 5; ++q) {
    const double ang = 2.0 * 3.14159265358979323846 * q / 5.0;
    t.vertices[static_cast<size_t>(vi)] =
        mound_center + Vec3{0.008 * std::cos(ang), 0.006 * std::sin(ang), 0.002};
    set_weights(t.skin[static_cast<size_t>(vi)], {{0, 0.6}, {1, 0.4}});
    ++vi;
  }
  for (int q = 0; q < 5; ++q)
    t.faces.push_back({mound_base + q, mound_base + (q + 1) % 5, wrist_base});

  // ---- output joint regressor ---------------------------------------------
  for (int k = 0; k < kBones; ++k)
    for (int v = 0; v < kVerts; ++v)
      t.joint_regressor[static_cast<size_t>(k) * kVerts + v] =
          t.bone_anchors[static_cast<size_t>(k) * kVerts + v];
  for (int f = 0; f < 5; ++f)
    t.joint_regressor[static_cast<size_t>(16 + f) * kVerts + apex[static_cast<size_t>(f)]] = 1.0;

  // ---- shape directions -----------------------------------------------------
  for (int v = 0; v < kVerts; ++v) {
    const Vec3 p = t.vertices[static_cast<size_t>(v)];
    auto& dirs = t.shape_dirs[static_cast<size_t>(v)];
    const int f = finger_of[static_cast<size_t>(v)];
    const bool is_palm = f < 0;
    const double distal = p.y > kPalmTopY ? (p.y - kPalmTopY) / kPalmTopY : 0.0;

    dirs[0] = p * 0.006;                                   // overall scale
    dirs[1] = Vec3{0, 0.002 * distal, 0};                  // finger length
    dirs[2] = f >= 0 ? radial[static_cast<size_t>(v)] * 0.0012 : Vec3{};  // thickness
    dirs[3] = Vec3{0.06 * p.x, 0, 0};                      // hand width
    dirs[4] = Vec3{0, 0.02 * std::min(p.y, kPalmTopY), 0};  // palm length
    if (f == 0) {  // thumb length, along the thumb axis
      const Vec3 axis = normalize(kFingers[0].tip - kFingers[0].st0);
      const double span = geom::norm(kFingers[0].tip - kFingers[0].st0);
      const double along = dot(p - kFingers[0].st0, axis);
      dirs[5] = axis * (0.002 * std::max(0.0, along / span));
    }
    if (f >= 0) dirs[6] = Vec3{0.003 * kFingers[f].spread * distal, 0, 0};  // spread
    if (p.y > 0.05 && p.y < 0.09) {                         // knuckle arch
      const double s = p.x / 0.035;
      dirs[7] = Vec3{0, 0, 0.0025 * (1.0 - s * s)};
    }
    if (is_palm) dirs[8] = Vec3{0, 0, p.z >= 0 ? 0.0018 : -0.0018};  // thickness
    if (f == 4) dirs[9] = Vec3{0, 0.002 * distal, 0};       // pinky length
  }

  return t;
}

}  // namespace

HandTemplate mirror_template(const HandTemplate& src) {
  HandTemplate t = src;
  t.handedness =
      src.handedness == Handedness::right ? Handedness::left : Handedness::right;
  for (auto& v : t.vertices) v.x = -v.x;
  for (auto& dirs : t.shape_dirs)
    for (auto& d : dirs) d.x = -d.x;
  // Flip triangle winding so faces keep a consistent orientation.
  for (auto& fc : t.faces) std::swap(fc[1], fc[2]);
  return t;
}

const HandTemplate& hand_template(Handedness h) {
  static const HandTemplate right = build_right_template();
  static const HandTemplate left = mirror_template(right);
  return h == Handedness::right ? right : left;
}

HandParams mirror_params(const HandParams& p) {
  HandParams out = p;
  for (auto& v : out.theta) {
    v.y = -v.y;
    v.z = -v.z;
  }
  out.handedness =
      p.handedness == Handedness::right ? Handedness::left : Handedness::right;
  return out;
}

}  // namespace iw::hand
