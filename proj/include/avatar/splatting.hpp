#pragma once

#include "avatar/image.hpp"
#include "avatar/types.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace avatar {

inline constexpr double kCovarianceDilation = 0.3; // px^2 added to the projected covariance diagonal
inline constexpr double kCutoffSigma = 3.0;
inline constexpr double kAlphaCap = 0.99;
inline constexpr double kMinTransmittance = 1e-4;

/// Pinhole camera. Pixel (x, y) covers [x, x+1) x [y, y+1); its sample is the center.
struct Camera {
    Mat4 world_to_camera = Mat4::Identity();
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    int width = 1, height = 1;
    double near_plane = 0.01;

    Mat3 rotation() const { return world_to_camera.block<3, 3>(0, 0); }
    Vec3 translation() const { return world_to_camera.block<3, 1>(0, 3); }
    /// Throws DataError for non-positive focal lengths, empty images or a non-rigid pose.
    void validate() const;
};

struct SplatScreen {
    Vec2 mean = Vec2::Zero(); // pixels
    Mat2 cov = Mat2::Identity(); // pixels^2, dilation included
    double depth = 0.0; // camera-space z
    double radius = 0.0; // pixels
    bool visible = false;
};

/// Projects a 3D Gaussian with the local affine approximation of the pinhole map.
/// Splats at or behind the near plane come back with visible = false.
SplatScreen project_splat(const Vec3 &center, const Mat3 &cov, const Camera &camera);

/// The 2x3 Jacobian of the perspective map at camera-space point t.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3 &t, const Camera &camera);

struct ProjectionGrad {
    Vec3 center = Vec3::Zero();
    Mat3 cov = Mat3::Zero();
};
ProjectionGrad project_splat_backward(const Vec3 &center, const Mat3 &cov, const Camera &camera, const Vec2 &grad_mean,
                                      const Mat2 &grad_cov);

/// exp(-1/2 d^T cov^-1 d) with d = pixel - mean.
double eval_gaussian2d(const Vec2 &mean, const Mat2 &cov, const Vec2 &pixel);

/// Splats ready for compositing: screen geometry plus per-splat channel values.
struct SplatBatch {
    int channels = 3;
    std::vector<SplatScreen> splats;
    std::vector<double> colors; // splats.size() x channels
    std::vector<double> opacities;

    std::size_t size() const { return splats.size(); }
};

struct RenderOptions {
    int tile_size = 16;
    /// Restrict each splat to pixels within kCutoffSigma standard deviations.
    /// Disabling it lets every splat touch every pixel.
    bool radius_cutoff = true;
};

/// Per-pixel blend record kept by the forward pass for the backward pass.
struct Contribution {
    int splat = 0;
    double alpha = 0.0; // clamped effective opacity
    double gaussian = 0.0;
    double transmittance = 1.0; // before this splat
    bool clamped = false;
};

struct RenderCache {
    bool valid = false;
    int width = 0, height = 0;
    std::vector<int> order; // visible splats, front to back
    std::vector<std::vector<Contribution>> tile_contributions;
    std::vector<std::size_t> pixel_offset; // into its tile's contribution list
    std::vector<int> pixel_count;
    std::vector<int> pixel_tile;
    std::vector<double> final_transmittance;
};

struct RenderOutput {
    ImagePlane color; // batch.channels
    ImagePlane alpha; // 1 - final transmittance
};

/// Front-to-back alpha compositing of depth-sorted splats (ties broken by index).
RenderOutput composite(const SplatBatch &batch, const Camera &camera, std::span<const double> background,
                       const RenderOptions &options = {}, RenderCache *cache = nullptr);

struct SplatGrad {
    std::vector<Vec2> mean;
    std::vector<Mat2> cov;
    std::vector<double> colors;
    std::vector<double> opacities;
};

/// Reverse of composite for a loss on the color image. Throws std::logic_error
/// when the cache was not filled by a forward pass.
SplatGrad composite_backward(const SplatBatch &batch, std::span<const double> background,
                             const ImagePlane &grad_color, const RenderCache &cache);

inline const double kShC0 = 1.0 / std::sqrt(4.0 * std::numbers::pi);

/// Degree-0 SH coefficients carrying a normal as an RGB triple.
inline Vec3 encode_normal_sh(const Vec3 &n) { return n * kShC0; }
/// Inverse of encode_normal_sh.
inline Vec3 decode_normal_sh(const Vec3 &coeff) { return coeff * std::sqrt(4.0 * std::numbers::pi); }

/// Second rasterizer pass: composites decoded normal SH over a zero background
/// using the same screen geometry as the color pass.
RenderOutput render_normals(std::span<const SplatScreen> splats, std::span<const Vec3> normals,
                            std::span<const double> opacities, const Camera &camera, const RenderOptions &options = {},
                            RenderCache *cache = nullptr);

} // namespace avatar
