#pragma once

#include "avatar/geometry.hpp"
#include "avatar/splatting.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace testutil {

using avatar::Mat3;
using avatar::Vec2;
using avatar::Vec3;

// Relative error below rel, or absolute error below abs when both values are under 1e-3.
inline bool grad_matches(double analytic, double numeric, double rel = 1e-4, double abs = 1e-7) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < 1e-3) return std::abs(analytic - numeric) < abs;
    return std::abs(analytic - numeric) / scale < rel;
}

template <typename F> double central_difference(F &&f, double &x, double h = 1e-6) {
    const double x0 = x;
    x = x0 + h;
    const double fp = f();
    x = x0 - h;
    const double fm = f();
    x = x0;
    return (fp - fm) / (2.0 * h);
}

inline double uniform(std::mt19937_64 &rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 random_vec(std::mt19937_64 &rng, double lo = -1.0, double hi = 1.0) {
    return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

inline Mat3 random_rotation(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q.toRotationMatrix();
}

inline avatar::TemplateMesh icosphere(int subdivisions, double radius) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    avatar::TemplateMesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    m.faces = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
               {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) m = avatar::midpoint_subdivide(m);
    for (Vec3 &v : m.vertices) v = radius * v.normalized();
    return m;
}

// Camera at `eye` looking at `target`; x right, y down, z forward.
inline avatar::Camera look_at(const Vec3 &eye, const Vec3 &target, double focal, int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 up = Vec3::UnitY();
    if (std::abs(forward.dot(up)) > 0.99) up = Vec3::UnitZ();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    avatar::Camera cam;
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.block<3, 3>(0, 0) = r;
    cam.world_to_camera.block<3, 1>(0, 3) = -r * eye;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    return cam;
}

} // namespace testutil
