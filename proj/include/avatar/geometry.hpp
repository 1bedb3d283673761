#pragma once

#include "avatar/types.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace avatar {

/// Thickness of every splat along its face normal, in scene units (1 mm for metric rigs).
inline constexpr double kSurfaceEpsilon = 1e-3;

/// Faces with area below this are skipped for the frame instead of raising.
inline constexpr double kDegenerateArea = 1e-12;

struct TemplateMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }

    /// Throws DataError on out-of-range or repeated face indices.
    void validate() const;
};

/// Orthonormal frame anchored on one triangle: r0 is the normal, r1 the first
/// edge direction and r2 = r0 x r1.
struct FaceFrame {
    Vec3 r0, r1, r2;
    Vec3 centroid;

    Mat3 matrix() const {
        Mat3 m;
        m << r0, r1, r2;
        return m;
    }
};

/// Per-face splat shape. s1 is fixed to the surface epsilon; opacity is fixed to 1.
struct SplatGeometry {
    double s2 = 0.0;
    double s3 = 0.0;
    Vec2 rot2d{1.0, 0.0};
    double opacity = 1.0;

    Vec3 scales(double epsilon = kSurfaceEpsilon) const { return {epsilon, s2, s3}; }
};

Vec3 face_centroid(const TemplateMesh &mesh, std::span<const Vec3> posed_vertices, std::size_t face);

double triangle_area(const Vec3 &a, const Vec3 &b, const Vec3 &c);

/// Right-handed unit normal of (v0, v1, v2); nullopt when the area is below kDegenerateArea.
std::optional<Vec3> face_normal(const Vec3 &v0, const Vec3 &v1, const Vec3 &v2);
std::optional<Vec3> face_normal(std::span<const Vec3> posed_vertices, const Face &face);

std::optional<FaceFrame> build_face_frame(const Vec3 &v0, const Vec3 &v1, const Vec3 &v2);
std::optional<FaceFrame> build_face_frame(std::span<const Vec3> posed_vertices, const Face &face);

/// Rotates r1/r2 in the face plane by the normalized complex number rot2d.
/// Throws std::domain_error("undefined in-plane rotation") for rot2d = 0.
Mat3 lift_rotation(const FaceFrame &frame, const Vec2 &rot2d);

/// R diag(S) diag(S) R^T. Throws std::domain_error on a nonpositive scale.
Mat3 build_covariance(const Mat3 &rotation, const Vec3 &scales);

// Reverse-mode helpers. Each takes the forward inputs plus the gradient of
// the output and returns (or accumulates) gradients of the inputs.

Vec3 normalize_backward(const Vec3 &x, const Vec3 &grad_unit);

/// Gradients of the face normal with respect to its three vertices.
std::array<Vec3, 3> face_normal_backward(const Vec3 &v0, const Vec3 &v1, const Vec3 &v2, const Vec3 &grad_normal);

/// Gradients of the frame columns (r0, r1, r2) with respect to the vertices.
std::array<Vec3, 3> face_frame_backward(const Vec3 &v0, const Vec3 &v1, const Vec3 &v2, const Vec3 &grad_r0,
                                        const Vec3 &grad_r1, const Vec3 &grad_r2);

/// Maps d(lifted rotation) back onto the frame columns r0, r1, r2.
std::array<Vec3, 3> lift_rotation_backward(const Vec2 &rot2d, const Mat3 &grad_rotation);

struct CovarianceGrad {
    Mat3 rotation;
    Vec3 scales;
};
CovarianceGrad build_covariance_backward(const Mat3 &rotation, const Vec3 &scales, const Mat3 &grad_cov);

/// Pairs of faces sharing an edge, each pair listed once with first < second.
std::vector<std::pair<int, int>> face_adjacency(const TemplateMesh &mesh);

/// Splits every triangle into four through edge midpoints. Shared edges get a
/// single midpoint vertex; existing vertex indices are preserved and new
/// vertices are appended. When edges is non-null it receives, for each
/// appended vertex, the endpoint pair it was split from.
TemplateMesh midpoint_subdivide(const TemplateMesh &mesh, std::vector<std::pair<int, int>> *edges = nullptr);

} // namespace avatar
