#include "test_util.hpp"

#include "avatar/geometry.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

using namespace avatar;
using namespace testutil;

TEST_SUITE("geometry") {

TEST_CASE("face frame of the unit right triangle") {
    const auto f = build_face_frame(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0));
    REQUIRE(f.has_value());
    CHECK((f->r0 - Vec3(0, 0, 1)).norm() < 1e-15);
    CHECK((f->r1 - Vec3(1, 0, 0)).norm() < 1e-15);
    CHECK((f->r2 - Vec3(0, 1, 0)).norm() < 1e-15);
    CHECK((f->centroid - Vec3(1.0 / 3, 1.0 / 3, 0)).norm() < 1e-15);
}

TEST_CASE("lift_rotation at identity rot2d equals the face frame") {
    const FaceFrame f = *build_face_frame(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0));
    Mat3 frame;
    frame << f.r0, f.r1, f.r2;
    CHECK((lift_rotation(f, Vec2(1, 0)) - frame).norm() < 1e-15);
    // 90 degrees in-plane swaps the tangent axes.
    const Mat3 r = lift_rotation(f, Vec2(0, 3));
    CHECK((r.col(1) - f.r2).norm() < 1e-15);
    CHECK((r.col(2) + f.r1).norm() < 1e-15);
    CHECK_THROWS_AS(lift_rotation(f, Vec2(0, 0)), std::domain_error);
}

TEST_CASE("degenerate faces produce no frame") {
    CHECK_FALSE(build_face_frame(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)).has_value());
    CHECK_FALSE(face_normal(Vec3(0, 0, 0), Vec3(1e-7, 0, 0), Vec3(0, 1e-7, 0)).has_value());
    CHECK(face_normal(Vec3(0, 0, 0), Vec3(1e-5, 0, 0), Vec3(0, 1e-5, 0)).has_value());
}

TEST_CASE("covariance of a flat splat") {
    const Mat3 cov = build_covariance(Mat3::Identity(), Vec3(1e-3, 0.2, 0.05));
    CHECK(cov(0, 0) == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(cov(1, 1) == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(cov(2, 2) == doctest::Approx(0.0025).epsilon(1e-12));
    CHECK_THROWS_AS(build_covariance(Mat3::Identity(), Vec3(0.0, 1.0, 1.0)), std::domain_error);
}

TEST_CASE("random triangles: orthonormal frames, equivariance, covariance spectrum") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        const Vec3 a = random_vec(rng), b = random_vec(rng), c = random_vec(rng);
        const auto f = build_face_frame(a, b, c);
        if (!f) continue;
        const Mat3 m = f->matrix();
        CHECK((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-12));

        const Mat3 q = random_rotation(rng);
        const Vec3 t = random_vec(rng);
        const auto g = build_face_frame(q * a + t, q * b + t, q * c + t);
        REQUIRE(g.has_value());
        CHECK((g->matrix() - q * m).cwiseAbs().maxCoeff() < 1e-10);

        const Vec3 s(1e-3, uniform(rng, 0.01, 0.5), uniform(rng, 0.01, 0.5));
        const Mat3 r = lift_rotation(*f, Vec2(uniform(rng, -1, 1), uniform(rng, -1, 1)));
        Eigen::SelfAdjointEigenSolver<Mat3> es(build_covariance(r, s));
        Vec3 expected = s.cwiseProduct(s);
        std::sort(expected.data(), expected.data() + 3);
        CHECK((es.eigenvalues() - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("face_frame_backward matches central differences") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<Vec3, 3> v{random_vec(rng), random_vec(rng), random_vec(rng)};
        const Vec3 g0 = random_vec(rng), g1 = random_vec(rng), g2 = random_vec(rng);
        const Vec2 rot(uniform(rng, -1, 1), uniform(rng, -1, 1));
        const Vec3 gs = random_vec(rng);
        const Mat3 gcov = Mat3::Random();
        const Vec3 scales(1e-3, 0.3, 0.1);
        auto loss = [&] {
            const FaceFrame f = *build_face_frame(v[0], v[1], v[2]);
            const Mat3 cov = build_covariance(lift_rotation(f, rot), scales);
            return g0.dot(f.r0) + g1.dot(f.r1) + g2.dot(f.r2) + gs.dot(f.centroid) + (gcov.array() * cov.array()).sum();
        };
        const FaceFrame f = *build_face_frame(v[0], v[1], v[2]);
        const Mat3 r = lift_rotation(f, rot);
        const CovarianceGrad cg = build_covariance_backward(r, scales, gcov);
        auto df = lift_rotation_backward(rot, cg.rotation);
        auto dv = face_frame_backward(v[0], v[1], v[2], df[0] + g0, df[1] + g1, df[2] + g2);
        for (int k = 0; k < 3; ++k)
            for (int d = 0; d < 3; ++d) {
                const double num = central_difference(loss, v[k][d]);
                CHECK(grad_matches(dv[k][d] + gs[d] / 3.0, num));
            }
    }
}

TEST_CASE("covariance scale gradient matches central differences") {
    std::mt19937_64 rng(6);
    const Mat3 r = random_rotation(rng);
    const Mat3 g = Mat3::Random();
    Vec3 s(1e-3, 0.2, 0.4);
    auto loss = [&] { return (g.array() * build_covariance(r, s).array()).sum(); };
    const CovarianceGrad cg = build_covariance_backward(r, s, g);
    for (int k = 0; k < 3; ++k) CHECK(grad_matches(cg.scales[k], central_difference(loss, s[k], 1e-7)));
}

TEST_CASE("adjacency lists each shared edge once") {
    TemplateMesh quad;
    quad.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
    quad.faces = {{0, 1, 2}, {0, 2, 3}};
    const auto adj = face_adjacency(quad);
    REQUIRE(adj.size() == 1);
    CHECK(adj[0] == std::pair<int, int>(0, 1));

    const TemplateMesh sphere = icosphere(2, 1.0);
    CHECK(face_adjacency(sphere).size() == sphere.face_count() * 3 / 2);
}

TEST_CASE("midpoint subdivision counts and parent edges") {
    const TemplateMesh ico = icosphere(0, 1.0);
    std::vector<std::pair<int, int>> edges;
    const TemplateMesh fine = midpoint_subdivide(ico, &edges);
    CHECK(fine.face_count() == 80);
    CHECK(fine.vertex_count() == 42);
    REQUIRE(edges.size() == 30);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const Vec3 expected = 0.5 * (ico.vertices[edges[i].first] + ico.vertices[edges[i].second]);
        CHECK((fine.vertices[12 + i] - expected).norm() == 0.0);
    }
}

TEST_CASE("mesh validation and centroid errors") {
    TemplateMesh m;
    m.vertices = {Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()};
    m.faces = {{0, 1, 3}};
    CHECK_THROWS_AS(m.validate(), DataError);
    m.faces = {{0, 1, 1}};
    CHECK_THROWS_AS(m.validate(), DataError);
    m.faces = {{0, 1, 2}};
    CHECK_NOTHROW(m.validate());
    CHECK_THROWS_AS(face_centroid(m, m.vertices, 1), std::out_of_range);
}

}
