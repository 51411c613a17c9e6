#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "iw/geometry.hpp"
#include "iw/tensor.hpp"

namespace iw::hand {

inline constexpr int kVerts = 128;   // mesh vertices
inline constexpr int kBones = 16;    // skeleton joints (wrist root = 0)
inline constexpr int kJoints = 21;   // output joints: skeleton + 5 fingertips

enum class Handedness { right, left };

/// Up to four (bone, weight) pairs per vertex; weights sum to 1.
struct VertexWeights {
  std::array<int, 4> bone{};
  std::array<double, 4> w{};
  int count = 0;
};

/// Procedurally generated articulated hand: low-poly fingers from ring
/// segments plus a two-layer palm. All lengths in meters; the rest pose is a
/// flat hand with fingers along +y and (for the right hand) the thumb toward
/// +x. Wrist-to-middle-fingertip is 0.15 at beta = 0.
struct HandTemplate {
  std::array<geom::Vec3, kVerts> vertices;
  std::array<int, kBones> parent;  // -1 for the wrist
  std::array<VertexWeights, kVerts> skin;
  /// shape_dirs[v][i]: displacement of vertex v per unit of shape coefficient
  /// i (0 scale, 1 finger length, 2 finger thickness, 3 hand width, 4 palm
  /// length, 5 thumb length, 6 finger spread, 7 knuckle arch, 8 palm
  /// thickness, 9 pinky length).
  std::array<std::array<geom::Vec3, 10>, kVerts> shape_dirs;
  /// Rest-joint anchors, kBones x kVerts row-major; rows sum to 1.
  std::vector<double> bone_anchors;
  /// Output joint regressor, kJoints x kVerts row-major; rows sum to 1.
  /// Rows 0..15 match the anchors; rows 16..20 are one-hot fingertip apexes
  /// (thumb, index, middle, ring, pinky).
  std::vector<double> joint_regressor;
  std::vector<std::array<int, 3>> faces;
  Handedness handedness = Handedness::right;
};

/// Cached immutable template for either handedness; the left template is the
/// exact x-mirror of the right one.
const HandTemplate& hand_template(Handedness h);

HandTemplate mirror_template(const HandTemplate& t);

struct HandParams {
  std::array<geom::Vec3, kBones> theta{};  // axis-angle; theta[0] is global
  std::array<double, 10> beta{};
  Handedness handedness = Handedness::right;
};

/// Mirror of a pose: negates the y and z axis-angle components of every
/// joint and toggles handedness.
HandParams mirror_params(const HandParams& p);

struct HandMesh {
  std::array<geom::Vec3, kVerts> vertices;  // root-relative
  std::array<geom::Vec3, kJoints> joints;   // root-relative, joints[0] = 0
};

struct RigidTransform {
  geom::Mat3 r;
  geom::Vec3 t;
};

struct ShapedHand {
  std::array<geom::Vec3, kVerts> vertices;
  std::array<geom::Vec3, kBones> rest_joints;
};

/// vertices = template + sum_i beta_i * shape_dirs[:, i]; rest joints are
/// regressed from the shaped vertices through the bone anchors.
ShapedHand shape_blend(const HandTemplate& t, std::span<const double> beta);

/// World-from-bone transforms along the kinematic tree:
/// G_k = G_parent * T(rest offset) * R(theta_k), identity above the root.
std::array<RigidTransform, kBones> forward_kinematics(
    const std::array<geom::Vec3, kBones>& rest_joints,
    const std::array<geom::Vec3, kBones>& theta,
    const std::array<int, kBones>& parent);

/// v' = sum_k w_vk * G_k(v - rest_joint_k).
std::array<geom::Vec3, kVerts> linear_blend_skin(
    const std::array<geom::Vec3, kVerts>& shaped,
    const std::array<RigidTransform, kBones>& transforms,
    const std::array<geom::Vec3, kBones>& rest_joints,
    const std::array<VertexWeights, kVerts>& skin);

/// Full pipeline: shape blend, forward kinematics, skinning, joint
/// regression, then subtraction of the wrist joint from everything.
HandMesh hand_forward(const HandTemplate& t, const HandParams& p);
HandMesh hand_forward(const HandParams& p);

/// Wavefront OBJ with 9-significant-digit decimals and LF line endings.
void export_obj(const HandMesh& mesh,
                const std::vector<std::array<int, 3>>& faces,
                const std::filesystem::path& path);

// Tape bridge: fused differentiable forward passes. The output tensor packs
// root-relative vertices then joints as (kVerts + kJoints) x 3; gradients
// reach theta and beta through an internally computed Jacobian.
ad::Tensor hand_forward_op(const ad::Tensor& theta_aa /*16x3*/,
                           const ad::Tensor& beta /*10*/, Handedness h);
ad::Tensor hand_forward_6d_op(const ad::Tensor& theta6d /*16x6*/,
                              const ad::Tensor& beta /*10*/, Handedness h);

}  // namespace iw::hand
