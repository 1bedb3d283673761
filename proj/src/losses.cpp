#include "avatar/losses.hpp"

#include "avatar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avatar {

void LossWeights::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
    if (!(photo >= 0.0 && normal >= 0.0 && consistency >= 0.0))
        throw std::invalid_argument("loss weights must be nonnegative");
}

namespace {

std::vector<double> gaussian_kernel(const SsimParams &p) {
    std::vector<double> k(p.window);
    const int r = p.window / 2;
    double sum = 0.0;
    for (int i = 0; i < p.window; ++i) {
        const double x = i - r;
        k[i] = std::exp(-x * x / (2.0 * p.sigma * p.sigma));
        sum += k[i];
    }
    for (double &v : k) v /= sum;
    return k;
}

/// Separable zero-padded "same" convolution of one plane. The kernel is
/// symmetric, so this operator is self-adjoint.
std::vector<double> blur(const std::vector<double> &src, int w, int h, const std::vector<double> &k) {
    const int r = static_cast<int>(k.size()) / 2;
    std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int xx = x + i;
                if (xx >= 0 && xx < w) s += k[i + r] * src[static_cast<std::size_t>(y) * w + xx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int yy = y + i;
                if (yy >= 0 && yy < h) s += k[i + r] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = s;
        }
    return out;
}

void check_shapes(const ImagePlane &a, const ImagePlane &b, const ImagePlane *mask) {
    if (!a.same_shape(b)) throw std::invalid_argument("image shape mismatch");
    if (a.pixel_count() == 0) throw std::invalid_argument("empty image");
    if (mask && (mask->width != a.width || mask->height != a.height || mask->channels != 1))
        throw std::invalid_argument("mask shape mismatch");
}

/// Per-pixel averaging weights: uniform, or uniform over the mask.
std::vector<double> pixel_weights(const ImagePlane &a, const ImagePlane *mask) {
    const std::size_t n = a.pixel_count();
    std::vector<double> w(n, 1.0);
    if (mask) {
        for (std::size_t p = 0; p < n; ++p) w[p] = mask->data[p] > 0.5 ? 1.0 : 0.0;
    }
    double sum = 0.0;
    for (double v : w) sum += v;
    if (sum == 0.0) {
        std::fill(w.begin(), w.end(), 0.0);
        return w;
    }
    for (double &v : w) v /= sum * a.channels;
    return w;
}

ImageLoss ssim_impl(const ImagePlane &a, const ImagePlane &b, const ImagePlane *mask, const SsimParams &params,
                    bool want_grad) {
    check_shapes(a, b, mask);
    const int w = a.width, h = a.height, ch = a.channels;
    const std::size_t n = a.pixel_count();
    const auto kernel = gaussian_kernel(params);
    const auto weight = pixel_weights(a, mask);

    ImageLoss out;
    if (want_grad) out.grad = ImagePlane(w, h, ch);
    std::vector<double> channel_value(ch, 0.0);

    parallel_for(static_cast<std::size_t>(ch), [&](std::size_t c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t p = 0; p < n; ++p) {
            x[p] = a.data[p * ch + c];
            y[p] = b.data[p * ch + c];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const auto mx = blur(x, w, h, kernel), my = blur(y, w, h, kernel);
        const auto bxx = blur(xx, w, h, kernel), byy = blur(yy, w, h, kernel), bxy = blur(xy, w, h, kernel);

        std::vector<double> d_mx(n), d_sxx(n), d_sxy(n);
        double value = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            const double sxx = bxx[p] - mx[p] * mx[p];
            const double syy = byy[p] - my[p] * my[p];
            const double sxy = bxy[p] - mx[p] * my[p];
            const double a1 = 2.0 * mx[p] * my[p] + params.c1;
            const double a2 = 2.0 * sxy + params.c2;
            const double b1 = mx[p] * mx[p] + my[p] * my[p] + params.c1;
            const double b2 = sxx + syy + params.c2;
            const double s = (a1 * a2) / (b1 * b2);
            value += weight[p] * s;
            if (want_grad) {
                const double wp = weight[p];
                d_mx[p] = wp * ((2.0 * my[p] * a2) / (b1 * b2) - s * 2.0 * mx[p] / b1);
                d_sxx[p] = wp * (-s / b2);
                d_sxy[p] = wp * (2.0 * a1 / (b1 * b2));
            }
        }
        channel_value[c] = value;
        if (!want_grad) return;
        // sxx = blur(x^2) - mx^2 and sxy = blur(xy) - mx my route extra terms through mx.
        std::vector<double> g_mean(n);
        for (std::size_t p = 0; p < n; ++p) g_mean[p] = d_mx[p] - 2.0 * mx[p] * d_sxx[p] - my[p] * d_sxy[p];
        const auto t_mean = blur(g_mean, w, h, kernel);
        const auto t_xx = blur(d_sxx, w, h, kernel);
        const auto t_xy = blur(d_sxy, w, h, kernel);
        for (std::size_t p = 0; p < n; ++p) out.grad.data[p * ch + c] = t_mean[p] + 2.0 * x[p] * t_xx[p] + y[p] * t_xy[p];
    });
    for (double v : channel_value) out.value += v;
    // An empty mask leaves nothing to compare.
    if (mask && std::all_of(weight.begin(), weight.end(), [](double v) { return v == 0.0; })) out.value = 1.0;
    return out;
}

} // namespace

double ssim(const ImagePlane &a, const ImagePlane &b, const ImagePlane *mask, const SsimParams &params) {
    return ssim_impl(a, b, mask, params, false).value;
}

ImageLoss ssim_with_grad(const ImagePlane &a, const ImagePlane &b, const ImagePlane *mask, const SsimParams &params) {
    return ssim_impl(a, b, mask, params, true);
}

ImageLoss l1_dssim(const ImagePlane &pred, const ImagePlane &target, double lambda, const ImagePlane *mask) {
    check_shapes(pred, target, mask);
    const auto weight = pixel_weights(pred, mask);
    const int ch = pred.channels;
    ImageLoss out;
    out.grad = ImagePlane(pred.width, pred.height, ch);
    double l1 = 0.0;
    for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
        for (int c = 0; c < ch; ++c) {
            const std::size_t i = p * ch + c;
            const double d = pred.data[i] - target.data[i];
            l1 += weight[p] * std::abs(d);
            out.grad.data[i] = (1.0 - lambda) * weight[p] * ((d > 0.0) - (d < 0.0));
        }
    }
    out.value = (1.0 - lambda) * l1;
    if (lambda > 0.0) {
        const ImageLoss s = ssim_with_grad(pred, target, mask);
        out.value += lambda * 0.5 * (1.0 - s.value);
        for (std::size_t i = 0; i < out.grad.data.size(); ++i) out.grad.data[i] -= lambda * 0.5 * s.grad.data[i];
    }
    return out;
}

ImageLoss normal_loss(const ImagePlane &pred_normal, const ImagePlane &target_normal, double lambda,
                      const ImagePlane *mask) {
    check_shapes(pred_normal, target_normal, mask);
    ImagePlane p = pred_normal, t = target_normal;
    for (double &v : p.data) v = 0.5 * (v + 1.0);
    for (double &v : t.data) v = 0.5 * (v + 1.0);
    ImageLoss out = l1_dssim(p, t, lambda, mask);
    for (double &g : out.grad.data) g *= 0.5;
    return out;
}

VertexLoss normal_consistency(std::span<const Vec3> vertices, const TemplateMesh &mesh,
                              std::span<const std::pair<int, int>> adjacency) {
    VertexLoss out;
    out.grad.assign(vertices.size(), Vec3::Zero());
    const std::size_t nf = mesh.faces.size();
    std::vector<std::optional<Vec3>> normals(nf);
    for (std::size_t f = 0; f < nf; ++f) normals[f] = face_normal(vertices, mesh.faces[f]);

    std::size_t used = 0;
    std::vector<Vec3> d_normal(nf, Vec3::Zero());
    for (const auto &[i, j] : adjacency) {
        if (!normals[i] || !normals[j]) continue;
        out.value += 1.0 - normals[i]->dot(*normals[j]);
        d_normal[i] -= *normals[j];
        d_normal[j] -= *normals[i];
        ++used;
    }
    if (used == 0) return out;
    const double inv = 1.0 / static_cast<double>(used);
    out.value *= inv;
    for (std::size_t f = 0; f < nf; ++f) {
        if (!normals[f] || d_normal[f].isZero(0.0)) continue;
        const Face &t = mesh.faces[f];
        const auto g = face_normal_backward(vertices[t[0]], vertices[t[1]], vertices[t[2]], d_normal[f] * inv);
        for (int k = 0; k < 3; ++k) out.grad[t[k]] += g[k];
    }
    return out;
}

TotalLoss total_loss(const ImagePlane &pred_color, const ImagePlane &gt_color, const ImagePlane &pred_normal,
                     const ImagePlane *gt_normal, std::span<const Vec3> posed_vertices, const TemplateMesh &mesh,
                     std::span<const std::pair<int, int>> adjacency, const LossWeights &weights,
                     const ImagePlane *mask) {
    weights.validate();
    TotalLoss out;
    out.grad_color = ImagePlane(pred_color.width, pred_color.height, pred_color.channels);
    out.grad_normal = ImagePlane(pred_normal.width, pred_normal.height, pred_normal.channels);
    out.grad_vertices.assign(posed_vertices.size(), Vec3::Zero());

    // Components are always evaluated so that disabled terms still show up in the logs.
    {
        const ImageLoss l = l1_dssim(pred_color, gt_color, weights.lambda, mask);
        out.rgb = l.value;
        for (std::size_t i = 0; i < l.grad.data.size(); ++i) out.grad_color.data[i] = weights.photo * l.grad.data[i];
    }
    if (gt_normal) {
        const ImageLoss l = normal_loss(pred_normal, *gt_normal, weights.lambda, mask);
        out.normal = l.value;
        for (std::size_t i = 0; i < l.grad.data.size(); ++i) out.grad_normal.data[i] = weights.normal * l.grad.data[i];
    }
    {
        const VertexLoss l = normal_consistency(posed_vertices, mesh, adjacency);
        out.consistency = l.value;
        for (std::size_t v = 0; v < l.grad.size(); ++v) out.grad_vertices[v] = weights.consistency * l.grad[v];
    }
    out.total = weights.photo * out.rgb + weights.normal * out.normal + weights.consistency * out.consistency;
    return out;
}

} // namespace avatar
