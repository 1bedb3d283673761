#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <stdexcept>
#include <string>

namespace avatar {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Vertex indices of one triangle, in stored order.
using Face = std::array<int, 3>;

/// Input files or in-memory data violate a documented contract (CLI exit code 2).
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Optimization produced a non-finite value (CLI exit code 3).
class DivergenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace avatar
