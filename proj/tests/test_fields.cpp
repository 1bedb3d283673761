#include "test_util.hpp"

#include "avatar/fields.hpp"
#include "avatar/parallel.hpp"

#include <doctest.h>

using namespace avatar;
using namespace testutil;

namespace {

HashGridConfig small_grid() {
    HashGridConfig g;
    g.levels = 4;
    g.log2_table_size = 10;
    g.features_per_entry = 2;
    g.hidden_width = 8;
    g.aabb_min = Vec3::Constant(-1.0);
    g.aabb_max = Vec3::Constant(1.0);
    return g;
}

// Gives the head nonzero weights everywhere so every parameter carries gradient.
void randomize(HashField &f, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (double &p : f.params()) p = uniform(rng, -0.5, 0.5);
}

} // namespace

TEST_SUITE("fields") {

TEST_CASE("level resolutions follow floor(4 * 1.5^l)") {
    const HashGridConfig g;
    const int expected[16] = {4, 6, 9, 13, 20, 30, 45, 68, 102, 153, 230, 345, 518, 778, 1167, 1751};
    for (int l = 0; l < 16; ++l) CHECK(g.resolution(l) == expected[l]);
    CHECK(g.table_size() == 131072);
    for (int l = 0; l < 16; ++l) CHECK(g.dense(l) == (l <= 6));
}

TEST_CASE("spatial hash values") {
    // Independently evaluated: (x * 1 ^ y * 2654435761 ^ z * 805459861) mod 2^32 mod 2^17.
    CHECK(hash_corner(1, 2, 3, 131072) == 128476u);
    CHECK(hash_corner(100, 200, 300, 131072) == 110768u);
    CHECK(hash_corner(1751, 0, 1751, 131072) == 68340u);
}

TEST_CASE("corner weights form a partition of unity") {
    const HashField f(HashGridConfig{}, HashField::Activation::None, 1);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 100; ++i) {
        const Vec3 p = random_vec(rng, -1.2, 1.2);
        for (int l = 0; l < 16; ++l) {
            double s = 0;
            for (const auto &c : f.corners(p, l)) {
                CHECK(c.weight >= 0.0);
                CHECK(c.entry < 131072u);
                s += c.weight;
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
        }
    }
}

TEST_CASE("trilinear interpolation reproduces an affine table on a dense level") {
    HashGridConfig g = small_grid();
    HashField f(g, HashField::Activation::None, 3);
    for (double &p : f.params()) p = 0.0;
    const int n = g.resolution(0);
    for (int z = 0; z <= n; ++z)
        for (int y = 0; y <= n; ++y)
            for (int x = 0; x <= n; ++x) f.table_entry(0, x + (n + 1) * (y + (n + 1) * z), 0) = 2.0 * x - y + 0.5 * z;
    std::mt19937_64 rng(4);
    for (int i = 0; i < 50; ++i) {
        const Vec3 p = random_vec(rng, -1, 1);
        const Vec3 u = (p - g.aabb_min).cwiseQuotient(g.aabb_max - g.aabb_min) * n;
        CHECK(f.encode(p)[0] == doctest::Approx(2.0 * u.x() - u.y() + 0.5 * u.z()).epsilon(1e-12));
    }
}

TEST_CASE("fresh fields output zero displacement and mid-gray color") {
    const HashField disp(HashGridConfig{}, HashField::Activation::None, 7);
    const HashField col(HashGridConfig{}, HashField::Activation::Sigmoid, 8);
    for (const Vec3 &p : {Vec3(0.1, 0.2, 0.3), Vec3(-0.9, 0.5, 0.0)}) {
        CHECK(displacement(disp, p).norm() == 0.0);
        CHECK((color(col, p) - Vec3::Constant(0.5)).norm() == 0.0);
    }
    for (std::size_t i = 0; i < disp.table_param_count(); i += 9973) CHECK(std::abs(disp.params()[i]) <= 1e-4);
}

TEST_CASE("same seed gives identical parameters") {
    const HashField a(small_grid(), HashField::Activation::None, 42), b(small_grid(), HashField::Activation::None, 42);
    CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
}

TEST_CASE("batched forward equals single-point evaluation") {
    HashField f(HashGridConfig{}, HashField::Activation::Sigmoid, 9);
    randomize(f, 10);
    std::mt19937_64 rng(11);
    std::vector<Vec3> pts;
    for (int i = 0; i < 20; ++i) pts.push_back(random_vec(rng));
    const auto out = f.forward(pts);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK((out[i] - f.evaluate(pts[i])).norm() == 0.0);
}

TEST_CASE("backward without a cached forward is an error") {
    HashField f(small_grid(), HashField::Activation::None, 1);
    const std::vector<Vec3> g{Vec3::Ones()};
    CHECK_THROWS_AS(f.backward(g), std::logic_error);
}

TEST_CASE("field gradients match central differences") {
    for (auto act : {HashField::Activation::None, HashField::Activation::Sigmoid}) {
        HashField f(small_grid(), act, 12);
        randomize(f, 13);
        std::mt19937_64 rng(14);
        std::vector<Vec3> pts, g;
        for (int i = 0; i < 5; ++i) {
            pts.push_back(random_vec(rng, -0.9, 0.9));
            g.push_back(random_vec(rng));
        }
        auto loss = [&] {
            double s = 0;
            for (std::size_t i = 0; i < pts.size(); ++i) s += g[i].dot(f.evaluate(pts[i]));
            return s;
        };
        f.zero_grad();
        f.forward(pts);
        f.backward(g);
        const std::vector<double> grad(f.grad().begin(), f.grad().end());
        // Touched table entries plus a stride through the head.
        std::vector<std::size_t> idx;
        for (const Vec3 &p : pts)
            for (int l = 0; l < small_grid().levels; ++l)
                idx.push_back((static_cast<std::size_t>(l) * small_grid().table_size() + f.corners(p, l)[3].entry) * 2 + 1);
        for (std::size_t i = f.table_param_count(); i < f.params().size(); i += 7) idx.push_back(i);
        idx.push_back(f.params().size() - 1);
        for (std::size_t i : idx) CHECK(grad_matches(grad[i], central_difference(loss, f.params()[i])));
    }
}

TEST_CASE("batch gradient is the sum of per-item gradients and ignores the thread count") {
    HashField f(small_grid(), HashField::Activation::Sigmoid, 15);
    randomize(f, 16);
    std::mt19937_64 rng(17);
    std::vector<Vec3> pts, g;
    for (int i = 0; i < 40; ++i) {
        pts.push_back(random_vec(rng, -0.9, 0.9));
        g.push_back(random_vec(rng));
    }
    f.zero_grad();
    f.forward(pts);
    f.backward(g);
    const std::vector<double> batch(f.grad().begin(), f.grad().end());

    std::vector<double> summed(batch.size(), 0.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        f.zero_grad();
        f.forward(std::span<const Vec3>(&pts[i], 1));
        f.backward(std::span<const Vec3>(&g[i], 1));
        for (std::size_t k = 0; k < summed.size(); ++k) summed[k] += f.grad()[k];
    }
    double worst = 0;
    for (std::size_t k = 0; k < summed.size(); ++k) worst = std::max(worst, std::abs(summed[k] - batch[k]));
    CHECK(worst < 1e-12);

    set_thread_count(3);
    f.zero_grad();
    f.forward(pts);
    f.backward(g);
    set_thread_count(1);
    CHECK(std::equal(batch.begin(), batch.end(), f.grad().begin()));
}

}
