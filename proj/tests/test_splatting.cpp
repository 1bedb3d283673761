#include "splat_oracle.hpp"
#include "test_util.hpp"

#include "avatar/parallel.hpp"
#include "avatar/splatting.hpp"

#include <doctest.h>

#include <numbers>

using namespace avatar;
using namespace testutil;

namespace {

Camera simple_camera(int w, int h, double f = 50.0) {
    Camera cam;
    cam.fx = cam.fy = f;
    cam.cx = 0.5 * w;
    cam.cy = 0.5 * h;
    cam.width = w;
    cam.height = h;
    return cam;
}

double weighted_sum(const ImagePlane &img, const std::vector<double> &w) {
    double s = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i) s += w[i] * img.data[i];
    return s;
}

} // namespace

TEST_SUITE("splatting") {

TEST_CASE("a splat on the optical axis lands on the principal point") {
    const Camera cam = simple_camera(32, 32);
    const SplatScreen s = project_splat(Vec3(0, 0, 2), Mat3::Identity() * 1e-4, cam);
    REQUIRE(s.visible);
    CHECK((s.mean - Vec2(16, 16)).norm() < 1e-15);
    CHECK(s.depth == 2.0);
    // J = f/z on the axis: (50/2)^2 * 1e-4 + 0.3
    CHECK(s.cov(0, 0) == doctest::Approx(625 * 1e-4 + 0.3).epsilon(1e-14));
    CHECK(s.radius == doctest::Approx(3.0 * std::sqrt(625 * 1e-4 + 0.3)).epsilon(1e-14));
}

TEST_CASE("splats behind the near plane are culled") {
    const Camera cam = simple_camera(8, 8);
    CHECK_FALSE(project_splat(Vec3(0, 0, 0.005), Mat3::Identity(), cam).visible);
    CHECK_FALSE(project_splat(Vec3(0, 0, -1), Mat3::Identity(), cam).visible);
}

TEST_CASE("projection Jacobian matches central differences") {
    const Camera cam = simple_camera(32, 32, 40);
    const Vec3 t(0.3, -0.2, 1.7);
    const auto j = projection_jacobian(t, cam);
    for (int k = 0; k < 3; ++k) {
        Vec3 tp = t, tm = t;
        tp[k] += 1e-6;
        tm[k] -= 1e-6;
        const Vec2 num = (Vec2(cam.fx * tp.x() / tp.z(), cam.fy * tp.y() / tp.z()) -
                          Vec2(cam.fx * tm.x() / tm.z(), cam.fy * tm.y() / tm.z())) / 2e-6;
        CHECK((num - j.col(k)).norm() < 1e-6);
    }
}

TEST_CASE("project_splat_backward matches central differences") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        Camera cam = look_at(random_vec(rng, -0.5, 0.5) + Vec3(0, 0, 3), Vec3::Zero(), 60, 32, 32);
        Vec3 center = random_vec(rng, -0.3, 0.3);
        const Mat3 r = random_rotation(rng);
        Mat3 cov = build_covariance(r, Vec3(1e-3, uniform(rng, 0.05, 0.2), uniform(rng, 0.05, 0.2)));
        const Vec2 gm(uniform(rng, -1, 1), uniform(rng, -1, 1));
        const Mat2 gc = Mat2::Random();
        auto loss = [&] {
            const SplatScreen s = project_splat(center, cov, cam);
            return gm.dot(s.mean) + (gc.array() * s.cov.array()).sum();
        };
        const ProjectionGrad g = project_splat_backward(center, cov, cam, gm, gc);
        for (int k = 0; k < 3; ++k) CHECK(grad_matches(g.center[k], central_difference(loss, center[k])));
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) CHECK(grad_matches(g.cov(a, b), central_difference(loss, cov(a, b))));
    }
}

TEST_CASE("pixel centers sit at half-integer coordinates") {
    SplatBatch b;
    b.channels = 1;
    SplatScreen s;
    s.mean = Vec2(2.5, 1.5);
    s.cov = Mat2::Identity() * 0.3;
    s.radius = 3 * std::sqrt(0.3);
    s.depth = 1;
    s.visible = true;
    b.splats = {s};
    b.colors = {1.0};
    b.opacities = {0.5};
    const std::vector<double> bg{0.0};
    const RenderOutput out = composite(b, simple_camera(4, 4), bg);
    CHECK(out.color.at(2, 1, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out.color.at(1, 1, 0) == doctest::Approx(0.5 * std::exp(-0.5 / 0.3)).epsilon(1e-14));
}

TEST_CASE("alpha is capped, compositing stops at low transmittance, background fills the rest") {
    SplatBatch b;
    b.channels = 1;
    for (int i = 0; i < 4; ++i) {
        SplatScreen s;
        s.mean = Vec2(0.5, 0.5);
        s.cov = Mat2::Identity();
        s.radius = 3;
        s.depth = 1.0 + i;
        s.visible = true;
        b.splats.push_back(s);
        b.colors.push_back(static_cast<double>(i + 1));
        b.opacities.push_back(1.0);
    }
    const std::vector<double> bg{7.0};
    RenderCache cache;
    const RenderOutput out = composite(b, simple_camera(1, 1), bg, {}, &cache);
    // 1*0.99 + 2*0.99*0.01, then T = 1e-4 exactly is not below the threshold: a third splat joins.
    const double t2 = 0.01 * 0.01;
    const double expected = 0.99 + 2 * 0.99 * 0.01 + 3 * 0.99 * t2 + 7.0 * t2 * 0.01;
    CHECK(out.color.at(0, 0, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(cache.pixel_count[0] == 3);
    CHECK(out.alpha.at(0, 0, 0) == doctest::Approx(1 - t2 * 0.01).epsilon(1e-14));
}

TEST_CASE("empty scene renders the background") {
    SplatBatch b;
    b.channels = 3;
    const std::vector<double> bg{0.1, 0.2, 0.3};
    const RenderOutput out = composite(b, simple_camera(5, 3), bg);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) {
            for (int c = 0; c < 3; ++c) CHECK(out.color.at(x, y, c) == bg[c]);
            CHECK(out.alpha.at(x, y, 0) == 0.0);
        }
}

TEST_CASE("tiled renderer equals the brute-force blend") {
    std::mt19937_64 rng(31);
    for (int scene = 0; scene < 5; ++scene) {
        const int w = 37, h = 29;
        const SplatBatch b = random_screen_scene(rng, 25, w, h, 3, 1.0);
        const std::vector<double> bg{0.2, 0.4, 0.6};
        for (bool cutoff : {false, true}) {
            RenderOptions opt;
            opt.radius_cutoff = cutoff;
            opt.tile_size = 8;
            const RenderOutput out = composite(b, simple_camera(w, h), bg, opt);
            const ImagePlane ref = brute_force_blend(b, w, h, bg, cutoff);
            double worst = 0;
            for (std::size_t i = 0; i < ref.data.size(); ++i) worst = std::max(worst, std::abs(ref.data[i] - out.color.data[i]));
            CHECK(worst < 1e-12);
        }
    }
}

TEST_CASE("render output and gradients do not depend on the thread count") {
    std::mt19937_64 rng(32);
    const SplatBatch b = random_screen_scene(rng, 30, 40, 40, 3, 0.9);
    const std::vector<double> bg{0.0, 0.0, 0.0};
    ImagePlane g(40, 40, 3);
    for (double &v : g.data) v = uniform(rng, -1, 1);
    RenderCache c1, c4;
    const RenderOutput o1 = composite(b, simple_camera(40, 40), bg, {}, &c1);
    const SplatGrad g1 = composite_backward(b, bg, g, c1);
    set_thread_count(4);
    const RenderOutput o4 = composite(b, simple_camera(40, 40), bg, {}, &c4);
    const SplatGrad g4 = composite_backward(b, bg, g, c4);
    set_thread_count(1);
    CHECK(o1.color.data == o4.color.data);
    CHECK(g1.colors == g4.colors);
    CHECK(g1.opacities == g4.opacities);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(g1.cov[i] == g4.cov[i]);
}

TEST_CASE("composite_backward matches central differences") {
    std::mt19937_64 rng(41);
    for (int scene = 0; scene < 5; ++scene) {
        SplatBatch b = random_screen_scene(rng, 8, 8, 8, 3, 0.8);
        std::vector<double> bg{uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)};
        const Camera cam = simple_camera(8, 8);
        RenderOptions opt;
        opt.radius_cutoff = false;
        std::vector<double> w(8 * 8 * 3);
        for (double &v : w) v = uniform(rng, -1, 1);
        ImagePlane gimg(8, 8, 3);
        gimg.data = w;
        RenderCache cache;
        composite(b, cam, bg, opt, &cache);
        const SplatGrad g = composite_backward(b, bg, gimg, cache);
        auto loss = [&] { return weighted_sum(composite(b, cam, bg, opt).color, w); };
        for (std::size_t i = 0; i < b.size(); ++i) {
            for (int k = 0; k < 2; ++k) CHECK(grad_matches(g.mean[i][k], central_difference(loss, b.splats[i].mean[k])));
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c) CHECK(grad_matches(g.cov[i](r, c), central_difference(loss, b.splats[i].cov(r, c))));
            for (int c = 0; c < 3; ++c) CHECK(grad_matches(g.colors[i * 3 + c], central_difference(loss, b.colors[i * 3 + c])));
            CHECK(grad_matches(g.opacities[i], central_difference(loss, b.opacities[i])));
        }
    }
}

TEST_CASE("backward without a forward cache is an error") {
    SplatBatch b;
    b.channels = 1;
    const std::vector<double> bg{0.0};
    CHECK_THROWS_AS(composite_backward(b, bg, ImagePlane(2, 2, 1), RenderCache{}), std::logic_error);
}

TEST_CASE("normal spherical-harmonic round trip") {
    const Vec3 n = Vec3(0.3, -0.5, 0.8).normalized();
    CHECK(kShC0 == doctest::Approx(1.0 / std::sqrt(4 * std::numbers::pi)).epsilon(1e-16));
    CHECK((decode_normal_sh(encode_normal_sh(n)) - n).norm() < 1e-15);
    CHECK((encode_normal_sh(n) * std::sqrt(4 * std::numbers::pi) - n).norm() < 1e-15);
}

TEST_CASE("camera validation") {
    Camera c = simple_camera(4, 4);
    CHECK_NOTHROW(c.validate());
    c.fx = 0;
    CHECK_THROWS_AS(c.validate(), DataError);
    c = simple_camera(4, 4);
    c.world_to_camera(0, 0) = 2;
    CHECK_THROWS_AS(c.validate(), DataError);
}

}
