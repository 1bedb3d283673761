#pragma once

#include "avatar/geometry.hpp"
#include "avatar/image.hpp"

#include <span>
#include <utility>
#include <vector>

namespace avatar {

struct LossWeights {
    double lambda = 0.2; // D-SSIM share of each image loss
    double photo = 1.0;
    double normal = 1.0;
    double consistency = 0.01;

    /// Throws std::invalid_argument for negative weights or lambda outside [0, 1].
    void validate() const;
};

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

struct ImageLoss {
    double value = 0.0;
    ImagePlane grad; // d value / d pred
};

/// Mean SSIM over pixels and channels with a zero-padded Gaussian window.
/// With a mask (1 channel, >0.5 = inside) the SSIM map is averaged over masked pixels only.
double ssim(const ImagePlane &a, const ImagePlane &b, const ImagePlane *mask = nullptr, const SsimParams &params = {});

/// SSIM value and its gradient with respect to a.
ImageLoss ssim_with_grad(const ImagePlane &a, const ImagePlane &b, const ImagePlane *mask = nullptr,
                         const SsimParams &params = {});

/// (1 - lambda) L1 + lambda (1 - SSIM) / 2. Throws std::invalid_argument on shape mismatch.
ImageLoss l1_dssim(const ImagePlane &pred, const ImagePlane &target, double lambda, const ImagePlane *mask = nullptr);

/// l1_dssim on normal images remapped from [-1, 1] to [0, 1].
ImageLoss normal_loss(const ImagePlane &pred_normal, const ImagePlane &target_normal, double lambda,
                      const ImagePlane *mask = nullptr);

struct VertexLoss {
    double value = 0.0;
    std::vector<Vec3> grad;
};

/// Mean over adjacent face pairs of 1 - n_i . n_j. Pairs touching a degenerate face are skipped.
VertexLoss normal_consistency(std::span<const Vec3> vertices, const TemplateMesh &mesh,
                              std::span<const std::pair<int, int>> adjacency);

struct TotalLoss {
    double rgb = 0.0;
    double normal = 0.0;
    double consistency = 0.0;
    double total = 0.0;
    ImagePlane grad_color;
    ImagePlane grad_normal;
    std::vector<Vec3> grad_vertices;
};

/// Weighted sum of the photometric, normal-map and consistency terms with routed gradients.
/// gt_normal may be null, in which case the normal term is zero.
TotalLoss total_loss(const ImagePlane &pred_color, const ImagePlane &gt_color, const ImagePlane &pred_normal,
                     const ImagePlane *gt_normal, std::span<const Vec3> posed_vertices, const TemplateMesh &mesh,
                     std::span<const std::pair<int, int>> adjacency, const LossWeights &weights,
                     const ImagePlane *mask = nullptr);

} // namespace avatar
