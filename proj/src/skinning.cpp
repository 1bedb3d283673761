#include "avatar/skinning.hpp"

#include "avatar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace avatar {

namespace {

Mat4 translation(const Vec3 &t) {
    Mat4 m = Mat4::Identity();
    m.block<3, 1>(0, 3) = t;
    return m;
}

Mat4 rigid(const Mat3 &r, const Vec3 &t) {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = r;
    m.block<3, 1>(0, 3) = t;
    return m;
}

void check_row(const std::vector<SkinInfluence> &row, std::size_t v) {
    double sum = 0.0;
    for (const auto &inf : row) sum += inf.weight;
    if (std::abs(sum - 1.0) > 1e-4)
        throw DataError("invalid skinning weights: row " + std::to_string(v) + " sums to " + std::to_string(sum));
}

} // namespace

Skeleton::Skeleton(std::vector<int> parents, std::vector<Vec3> rest) : rest_joints(std::move(rest)), parents_(std::move(parents)) {
    const std::size_t n = parents_.size();
    if (n == 0) throw DataError("skeleton has no joints");
    if (rest_joints.size() != n) throw DataError("skeleton: rest_joints length differs from parents length");
    if (parents_[0] != -1) throw DataError("skeleton: joint 0 must be the root (parent -1)");

    std::vector<std::vector<int>> children(n);
    for (std::size_t j = 1; j < n; ++j) {
        const int p = parents_[j];
        if (p < 0 || static_cast<std::size_t>(p) >= n || p == static_cast<int>(j))
            throw DataError("skeleton: joint " + std::to_string(j) + " has invalid parent " + std::to_string(p));
        children[p].push_back(static_cast<int>(j));
    }
    // Breadth-first from the root; joints never reached sit on a cycle.
    order_.push_back(0);
    for (std::size_t head = 0; head < order_.size(); ++head)
        for (int c : children[order_[head]]) order_.push_back(c);
    if (order_.size() != n) throw DataError("skeleton: parent graph is not a tree rooted at joint 0");
}

SkinWeights SkinWeights::from_influences(const std::vector<std::vector<SkinInfluence>> &rows, std::size_t bone_count) {
    SkinWeights out;
    out.rows.reserve(rows.size());
    for (std::size_t v = 0; v < rows.size(); ++v) {
        auto row = rows[v];
        for (const auto &inf : row) {
            if (inf.bone < 0 || static_cast<std::size_t>(inf.bone) >= bone_count)
                throw DataError("invalid skinning weights: row " + std::to_string(v) + " references bone " +
                                std::to_string(inf.bone));
            if (!(inf.weight >= 0.0) || !std::isfinite(inf.weight))
                throw DataError("invalid skinning weights: row " + std::to_string(v) + " has a negative weight");
        }
        check_row(row, v);
        std::erase_if(row, [](const SkinInfluence &i) { return i.weight == 0.0; });
        std::stable_sort(row.begin(), row.end(), [](const auto &a, const auto &b) { return a.weight > b.weight; });
        if (row.size() > kMaxInfluences) row.resize(kMaxInfluences);
        double sum = 0.0;
        for (const auto &inf : row) sum += inf.weight;
        for (auto &inf : row) inf.weight /= sum;
        out.rows.push_back(std::move(row));
    }
    return out;
}

Mat3 euler_xyz(const Vec3 &a) {
    return (Eigen::AngleAxisd(a.x(), Vec3::UnitX()) * Eigen::AngleAxisd(a.y(), Vec3::UnitY()) *
            Eigen::AngleAxisd(a.z(), Vec3::UnitZ()))
        .toRotationMatrix();
}

std::array<Mat3, 3> euler_xyz_derivatives(const Vec3 &a) {
    auto rot = [](int axis, double t) { return Eigen::AngleAxisd(t, Vec3::Unit(axis)).toRotationMatrix(); };
    // d/dt of a rotation about unit axis u is [u]_x R(t).
    auto drot = [&](int axis, double t) {
        Mat3 k = Mat3::Zero();
        const Vec3 u = Vec3::Unit(axis);
        k << 0, -u.z(), u.y(), u.z(), 0, -u.x(), -u.y(), u.x(), 0;
        return (k * rot(axis, t)).eval();
    };
    const Mat3 rx = rot(0, a.x()), ry = rot(1, a.y()), rz = rot(2, a.z());
    return {drot(0, a.x()) * ry * rz, rx * drot(1, a.y()) * rz, rx * ry * drot(2, a.z())};
}

std::vector<Mat4> bone_transforms(const Skeleton &skeleton, const PoseFrame &pose) {
    const std::size_t n = skeleton.joint_count();
    if (pose.joint_rotations.size() != n) throw DataError("pose joint count differs from skeleton joint count");
    const auto &parents = skeleton.parents();
    const auto &joints = skeleton.rest_joints;

    std::vector<Mat4> world(n);
    for (int j : skeleton.order()) {
        const Mat3 r = euler_xyz(pose.joint_rotations[j]);
        if (parents[j] < 0) {
            world[j] = rigid(r, pose.translation + joints[j]);
        } else {
            world[j] = world[parents[j]] * rigid(r, joints[j] - joints[parents[j]]);
        }
    }
    std::vector<Mat4> out(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = world[j] * translation(-joints[j]);
    return out;
}

BoneTransformGrad bone_transforms_backward(const Skeleton &skeleton, const PoseFrame &pose,
                                           std::span<const Mat4> grad_transforms) {
    const std::size_t n = skeleton.joint_count();
    const auto &parents = skeleton.parents();
    const auto &joints = skeleton.rest_joints;

    // Forward recomputation of local and world transforms.
    std::vector<Mat4> local(n), world(n);
    for (int j : skeleton.order()) {
        const Mat3 r = euler_xyz(pose.joint_rotations[j]);
        if (parents[j] < 0) {
            local[j] = rigid(r, pose.translation + joints[j]);
            world[j] = local[j];
        } else {
            local[j] = rigid(r, joints[j] - joints[parents[j]]);
            world[j] = world[parents[j]] * local[j];
        }
    }

    BoneTransformGrad g;
    g.rest_joints.assign(n, Vec3::Zero());
    g.joint_rotations.assign(n, Vec3::Zero());

    std::vector<Mat4> d_world(n, Mat4::Zero());
    for (std::size_t j = 0; j < n; ++j) {
        Mat4 db = Mat4::Zero();
        db.topRows<3>() = grad_transforms[j].topRows<3>();
        // B = G T(-J): rotation block passes through, translation gets -G_R J.
        d_world[j] += db * translation(-joints[j]).transpose();
        g.rest_joints[j] -= world[j].block<3, 3>(0, 0).transpose() * db.block<3, 1>(0, 3);
    }

    const auto &order = skeleton.order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int j = *it;
        Mat4 d_local;
        if (parents[j] < 0) {
            d_local = d_world[j];
        } else {
            const int p = parents[j];
            d_world[p] += d_world[j] * local[j].transpose();
            d_local = world[p].transpose() * d_world[j];
        }
        const Mat3 d_rot = d_local.block<3, 3>(0, 0);
        const Vec3 d_t = d_local.block<3, 1>(0, 3);
        const auto dr = euler_xyz_derivatives(pose.joint_rotations[j]);
        for (int k = 0; k < 3; ++k) g.joint_rotations[j][k] += (d_rot.cwiseProduct(dr[k])).sum();
        if (parents[j] < 0) {
            g.translation += d_t;
            g.rest_joints[j] += d_t;
        } else {
            g.rest_joints[j] += d_t;
            g.rest_joints[parents[j]] -= d_t;
        }
    }
    return g;
}

std::vector<Vec3> skin_vertices(std::span<const Vec3> vertices, const SkinWeights &weights,
                                std::span<const Mat4> transforms) {
    if (weights.vertex_count() != vertices.size())
        throw std::invalid_argument("skin_vertices: weight rows differ from vertex count");
    std::vector<Vec3> out(vertices.size());
    for (std::size_t v = 0; v < vertices.size(); ++v) check_row(weights.rows[v], v);
    parallel_for(vertices.size(), [&](std::size_t v) {
        Vec3 acc = Vec3::Zero();
        const Vec3 &p = vertices[v];
        for (const auto &inf : weights.rows[v]) {
            const Mat4 &b = transforms[inf.bone];
            acc += inf.weight * (b.block<3, 3>(0, 0) * p + b.block<3, 1>(0, 3));
        }
        out[v] = acc;
    });
    return out;
}

SkinGrad skin_vertices_backward(std::span<const Vec3> vertices, const SkinWeights &weights,
                                std::span<const Mat4> transforms, std::span<const Vec3> grad_posed) {
    SkinGrad g;
    g.vertices.assign(vertices.size(), Vec3::Zero());
    g.transforms.assign(transforms.size(), Mat4::Zero());
    for (std::size_t v = 0; v < vertices.size(); ++v) {
        const Vec3 &dp = grad_posed[v];
        for (const auto &inf : weights.rows[v]) {
            const Mat4 &b = transforms[inf.bone];
            g.vertices[v] += inf.weight * (b.block<3, 3>(0, 0).transpose() * dp);
            g.transforms[inf.bone].block<3, 3>(0, 0) += inf.weight * dp * vertices[v].transpose();
            g.transforms[inf.bone].block<3, 1>(0, 3) += inf.weight * dp;
        }
    }
    return g;
}

} // namespace avatar
