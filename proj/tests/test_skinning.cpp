#include "test_util.hpp"

#include "avatar/skinning.hpp"

#include <doctest.h>

#include <numbers>

using namespace avatar;
using namespace testutil;

namespace {

Mat3 rx(double t) {
    Mat3 m;
    m << 1, 0, 0, 0, std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t);
    return m;
}
Mat3 ry(double t) {
    Mat3 m;
    m << std::cos(t), 0, std::sin(t), 0, 1, 0, -std::sin(t), 0, std::cos(t);
    return m;
}
Mat3 rz(double t) {
    Mat3 m;
    m << std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t), 0, 0, 0, 1;
    return m;
}

SkinWeights single_bone(std::size_t vertices, int bone, std::size_t bones) {
    return SkinWeights::from_influences(std::vector<std::vector<SkinInfluence>>(vertices, {{bone, 1.0}}), bones);
}

} // namespace

TEST_SUITE("skinning") {

TEST_CASE("euler_xyz composes x, then y, then z as Rx Ry Rz") {
    const Vec3 a(0.3, -0.7, 1.1);
    CHECK((euler_xyz(a) - rx(a.x()) * ry(a.y()) * rz(a.z())).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("euler_xyz derivatives match central differences") {
    Vec3 a(0.4, 0.2, -0.9);
    const auto d = euler_xyz_derivatives(a);
    for (int k = 0; k < 3; ++k) {
        const double h = 1e-6;
        Vec3 ap = a, am = a;
        ap[k] += h;
        am[k] -= h;
        const Mat3 num = (euler_xyz(ap) - euler_xyz(am)) / (2 * h);
        CHECK((num - d[k]).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("identity pose leaves the canonical mesh unchanged") {
    std::mt19937_64 rng(1);
    const Skeleton skel({-1, 0, 1}, {Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 2, 0)});
    std::vector<Vec3> verts;
    std::vector<std::vector<SkinInfluence>> rows;
    for (int i = 0; i < 50; ++i) {
        verts.push_back(random_vec(rng, -2, 2));
        const double a = uniform(rng, 0, 1), b = uniform(rng, 0, 1 - a);
        rows.push_back({{0, a}, {1, b}, {2, 1 - a - b}});
    }
    const SkinWeights w = SkinWeights::from_influences(rows, 3);
    const auto posed = skin_vertices(verts, w, bone_transforms(skel, PoseFrame::identity(3)));
    for (std::size_t i = 0; i < verts.size(); ++i) CHECK((posed[i] - verts[i]).norm() < 1e-9);
}

TEST_CASE("root rotation and translation move the mesh rigidly about the root joint") {
    const Skeleton skel({-1, 0}, {Vec3(0.1, -0.2, 0.3), Vec3(0, 1, 0)});
    PoseFrame pose = PoseFrame::identity(2);
    pose.joint_rotations[0] = Vec3(0.3, -0.5, 0.8);
    pose.translation = Vec3(1.0, 2.0, -0.5);
    const std::vector<Vec3> verts{Vec3(0, 0, 0), Vec3(1, 2, 3), Vec3(-1, 0.5, 0.2)};
    const SkinWeights w = SkinWeights::from_influences({{{0, 0.3}, {1, 0.7}}, {{1, 1.0}}, {{0, 1.0}}}, 2);
    const auto posed = skin_vertices(verts, w, bone_transforms(skel, pose));
    const Mat3 r = rx(0.3) * ry(-0.5) * rz(0.8);
    for (std::size_t i = 0; i < verts.size(); ++i) {
        const Vec3 expected = r * (verts[i] - skel.rest_joints[0]) + skel.rest_joints[0] + pose.translation;
        CHECK((posed[i] - expected).norm() < 1e-9);
    }
}

TEST_CASE("two-bone chain matches a hand-composed transform") {
    const double q = std::numbers::pi / 2;
    const Skeleton skel({-1, 0}, {Vec3(0, 0, 0), Vec3(0, 1, 0)});
    PoseFrame pose = PoseFrame::identity(2);
    pose.joint_rotations[0] = Vec3(0, 0, q);
    pose.joint_rotations[1] = Vec3(q, 0, 0);
    const std::vector<Vec3> verts{Vec3(0, 2, 0), Vec3(0, 2, 0)};
    const SkinWeights w = SkinWeights::from_influences({{{1, 1.0}}, {{0, 0.5}, {1, 0.5}}}, 2);
    const auto posed = skin_vertices(verts, w, bone_transforms(skel, pose));
    // Bone 1: (0,2,0) -> joint-local (0,1,0) -> Rx: (0,0,1) -> +J1: (0,1,1) -> Rz: (-1,0,1).
    CHECK((posed[0] - Vec3(-1, 0, 1)).norm() < 1e-9);
    // Bone 0 alone maps (0,2,0) to (-2,0,0); the blend is the midpoint.
    CHECK((posed[1] - Vec3(-1.5, 0, 0.5)).norm() < 1e-9);
}

TEST_CASE("weight rows are validated, truncated to four and renormalized") {
    CHECK_THROWS_WITH_AS(SkinWeights::from_influences({{{0, 0.5}, {1, 0.4}}}, 2), doctest::Contains("invalid skinning weights"),
                         DataError);
    CHECK_THROWS_AS(SkinWeights::from_influences({{{2, 1.0}}}, 2), DataError);
    CHECK_THROWS_AS(SkinWeights::from_influences({{{0, 1.5}, {1, -0.5}}}, 2), DataError);
    const SkinWeights w =
        SkinWeights::from_influences({{{0, 0.1}, {1, 0.3}, {2, 0.2}, {3, 0.25}, {4, 0.15}}}, 5);
    REQUIRE(w.rows[0].size() == 4);
    CHECK(w.rows[0][0].bone == 1);
    double sum = 0;
    for (const auto &i : w.rows[0]) sum += i.weight;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(w.rows[0][0].weight == doctest::Approx(0.3 / 0.9));
}

TEST_CASE("skeleton must be a tree rooted at joint 0") {
    CHECK_THROWS_AS(Skeleton({0, 0}, {Vec3::Zero(), Vec3::Zero()}), DataError);
    CHECK_THROWS_AS(Skeleton({-1, 2, 1}, {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()}), DataError);
    CHECK_THROWS_AS(Skeleton({-1, 5}, {Vec3::Zero(), Vec3::Zero()}), DataError);
    const Skeleton ok({-1, 0, 0, 1}, std::vector<Vec3>(4, Vec3::Zero()));
    CHECK(ok.order().size() == 4);
}

TEST_CASE("skinning backward matches central differences") {
    std::mt19937_64 rng(3);
    Skeleton skel({-1, 0, 1, 0}, {random_vec(rng), random_vec(rng), random_vec(rng), random_vec(rng)});
    PoseFrame pose = PoseFrame::identity(4);
    for (auto &r : pose.joint_rotations) r = random_vec(rng, -1, 1);
    pose.translation = random_vec(rng);
    std::vector<Vec3> verts;
    std::vector<std::vector<SkinInfluence>> rows;
    for (int i = 0; i < 12; ++i) {
        verts.push_back(random_vec(rng));
        const double a = uniform(rng, 0.1, 0.5), b = uniform(rng, 0.1, 0.4);
        rows.push_back({{i % 4, a}, {(i + 1) % 4, b}, {(i + 2) % 4, 1 - a - b}});
    }
    const SkinWeights w = SkinWeights::from_influences(rows, 4);
    std::vector<Vec3> g;
    for (int i = 0; i < 12; ++i) g.push_back(random_vec(rng));
    auto loss = [&] {
        const auto p = skin_vertices(verts, w, bone_transforms(skel, pose));
        double s = 0;
        for (std::size_t i = 0; i < p.size(); ++i) s += g[i].dot(p[i]);
        return s;
    };
    const auto bones = bone_transforms(skel, pose);
    const SkinGrad sg = skin_vertices_backward(verts, w, bones, g);
    const BoneTransformGrad bg = bone_transforms_backward(skel, pose, sg.transforms);
    for (std::size_t i = 0; i < verts.size(); ++i)
        for (int d = 0; d < 3; ++d) CHECK(grad_matches(sg.vertices[i][d], central_difference(loss, verts[i][d])));
    for (std::size_t j = 0; j < 4; ++j)
        for (int d = 0; d < 3; ++d) {
            CHECK(grad_matches(bg.rest_joints[j][d], central_difference(loss, skel.rest_joints[j][d])));
            CHECK(grad_matches(bg.joint_rotations[j][d], central_difference(loss, pose.joint_rotations[j][d])));
        }
    for (int d = 0; d < 3; ++d) CHECK(grad_matches(bg.translation[d], central_difference(loss, pose.translation[d])));
}

TEST_CASE("skinning rejects mismatched inputs") {
    const Skeleton skel({-1}, {Vec3::Zero()});
    const std::vector<Vec3> verts{Vec3::Zero(), Vec3::UnitX()};
    CHECK_THROWS(skin_vertices(verts, single_bone(1, 0, 1), bone_transforms(skel, PoseFrame::identity(1))));
    CHECK_THROWS_AS(bone_transforms(skel, PoseFrame::identity(2)), DataError);
}

}
