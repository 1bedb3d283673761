#pragma once

#include "avatar/geometry.hpp"
#include "avatar/image.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace avatar {

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) over all channels; +inf when the images are identical.
double psnr(const ImagePlane &pred, const ImagePlane &gt);

struct ImageMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
};
ImageMetrics metric_images(const ImagePlane &pred, const ImagePlane &gt);

/// Nearest-surface queries over a fixed triangle mesh.
class TriangleBvh {
  public:
    explicit TriangleBvh(const TemplateMesh &mesh);

    struct Hit {
        Vec3 point;
        int face = -1;
        double distance = 0.0;
    };
    Hit closest(const Vec3 &p) const;

  private:
    struct Node {
        Vec3 lo, hi;
        int left = -1, right = -1; // children, or -1 for a leaf
        int begin = 0, end = 0; // range into faces_
    };
    int build(int begin, int end);

    const TemplateMesh &mesh_;
    std::vector<int> faces_;
    std::vector<Vec3> centroids_;
    std::vector<Node> nodes_;
};

Vec3 closest_point_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c);

struct SurfaceSample {
    Vec3 point;
    int face;
};
/// Area-weighted uniform samples; deterministic in seed.
std::vector<SurfaceSample> sample_surface(const TemplateMesh &mesh, std::size_t count, std::uint64_t seed);

/// Area-weighted surface centroid.
Vec3 surface_center(const TemplateMesh &mesh);

struct SurfaceDistance {
    double v2v_mm = 0.0; // mean of the two directed mean nearest-point distances
    double nc = 0.0; // mean 1 - n_a . n_b at matched points, both directions
};

/// Both meshes are shifted so their surface centers coincide; scale is left alone.
/// Each mesh is sampled with the same seed, so swapping the arguments gives the same value.
SurfaceDistance surface_distance(const TemplateMesh &a, const TemplateMesh &b, std::size_t samples = 100000,
                                 std::uint64_t seed = 0);
double metric_v2v(const TemplateMesh &a, const TemplateMesh &b, std::size_t samples = 100000, std::uint64_t seed = 0);

struct MetricsReport {
    std::optional<double> psnr;
    std::optional<double> ssim;
    std::optional<double> v2v_mm;
    std::optional<double> nc;
    std::optional<double> baseline_v2v_mm;
    int views = 0;

    std::string to_json() const;
};

} // namespace avatar
