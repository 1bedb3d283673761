#pragma once

#include "avatar/types.hpp"

#include <span>
#include <vector>

namespace avatar {

/// Kinematic tree. Joint 0 is the root; every other joint has a parent.
class Skeleton {
  public:
    Skeleton() = default;
    /// Throws DataError unless parents form a tree rooted at joint 0.
    Skeleton(std::vector<int> parents, std::vector<Vec3> rest_joints);

    std::size_t joint_count() const { return parents_.size(); }
    const std::vector<int> &parents() const { return parents_; }
    /// Parents come before children in this order.
    const std::vector<int> &order() const { return order_; }

    std::vector<Vec3> rest_joints;

  private:
    std::vector<int> parents_;
    std::vector<int> order_;
};

/// Euler angles (radians, intrinsic XYZ) per joint plus a world translation.
/// Joint 0 carries the global orientation; the others are local rotations.
struct PoseFrame {
    std::vector<Vec3> joint_rotations;
    Vec3 translation = Vec3::Zero();

    static PoseFrame identity(std::size_t joints) { return {std::vector<Vec3>(joints, Vec3::Zero()), Vec3::Zero()}; }
};

inline constexpr int kMaxInfluences = 4;

struct SkinInfluence {
    int bone = 0;
    double weight = 0.0;
};

/// Sparse per-vertex blend weights, at most kMaxInfluences per vertex.
struct SkinWeights {
    std::vector<std::vector<SkinInfluence>> rows;

    std::size_t vertex_count() const { return rows.size(); }

    /// Builds rows from arbitrary (bone, weight) lists. Rows must sum to 1
    /// within 1e-4 before truncation; the largest kMaxInfluences weights are
    /// kept and renormalized. Throws DataError("invalid skinning weights").
    static SkinWeights from_influences(const std::vector<std::vector<SkinInfluence>> &rows, std::size_t bone_count);
};

/// R = Rx(a) Ry(b) Rz(c).
Mat3 euler_xyz(const Vec3 &angles);
/// Partial derivatives of euler_xyz with respect to each angle.
std::array<Mat3, 3> euler_xyz_derivatives(const Vec3 &angles);

/// World transforms mapping canonical points to posed space, one per joint.
std::vector<Mat4> bone_transforms(const Skeleton &skeleton, const PoseFrame &pose);

struct BoneTransformGrad {
    std::vector<Vec3> rest_joints;
    std::vector<Vec3> joint_rotations;
    Vec3 translation = Vec3::Zero();
};

/// Reverse of bone_transforms. Only the top three rows of each grad matrix are read.
BoneTransformGrad bone_transforms_backward(const Skeleton &skeleton, const PoseFrame &pose,
                                           std::span<const Mat4> grad_transforms);

/// v_p = sum_i w_i B_i v'. Throws DataError("invalid skinning weights") when a row
/// is not normalized within 1e-4.
std::vector<Vec3> skin_vertices(std::span<const Vec3> vertices, const SkinWeights &weights,
                                std::span<const Mat4> transforms);

struct SkinGrad {
    std::vector<Vec3> vertices;
    std::vector<Mat4> transforms;
};
SkinGrad skin_vertices_backward(std::span<const Vec3> vertices, const SkinWeights &weights,
                                std::span<const Mat4> transforms, std::span<const Vec3> grad_posed);

} // namespace avatar
