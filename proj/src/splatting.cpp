#include "avatar/splatting.hpp"

#include "avatar/parallel.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace avatar {

ImagePlane slice_channels(const ImagePlane &img, int first, int count) {
    if (first < 0 || first + count > img.channels) throw std::out_of_range("channel slice out of range");
    ImagePlane out(img.width, img.height, count);
    for (std::size_t p = 0; p < img.pixel_count(); ++p)
        for (int c = 0; c < count; ++c) out.data[p * count + c] = img.data[p * img.channels + first + c];
    return out;
}

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw DataError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw DataError("camera resolution must be positive");
    const Mat3 r = rotation();
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || r.determinant() < 0.0)
        throw DataError("camera rotation block is not orthonormal");
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3 &t, const Camera &camera) {
    const double iz = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> j;
    j << camera.fx * iz, 0.0, -camera.fx * t.x() * iz * iz, 0.0, camera.fy * iz, -camera.fy * t.y() * iz * iz;
    return j;
}

SplatScreen project_splat(const Vec3 &center, const Mat3 &cov, const Camera &camera) {
    SplatScreen s;
    const Mat3 w = camera.rotation();
    const Vec3 t = w * center + camera.translation();
    s.depth = t.z();
    if (!(t.z() > camera.near_plane)) return s;
    s.mean = {camera.fx * t.x() / t.z() + camera.cx, camera.fy * t.y() / t.z() + camera.cy};
    const Eigen::Matrix<double, 2, 3> m = projection_jacobian(t, camera) * w;
    s.cov = m * cov * m.transpose();
    s.cov(0, 0) += kCovarianceDilation;
    s.cov(1, 1) += kCovarianceDilation;
    const double mid = 0.5 * (s.cov(0, 0) + s.cov(1, 1));
    const double det = s.cov.determinant();
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    s.radius = kCutoffSigma * std::sqrt(lambda_max);
    s.visible = true;
    return s;
}

ProjectionGrad project_splat_backward(const Vec3 &center, const Mat3 &cov, const Camera &camera, const Vec2 &grad_mean,
                                      const Mat2 &grad_cov) {
    ProjectionGrad g;
    const Mat3 w = camera.rotation();
    const Vec3 t = w * center + camera.translation();
    if (!(t.z() > camera.near_plane)) return g;
    const double fx = camera.fx, fy = camera.fy;
    const double iz = 1.0 / t.z();
    const Eigen::Matrix<double, 2, 3> j = projection_jacobian(t, camera);
    const Eigen::Matrix<double, 2, 3> m = j * w;

    // cov2d = M cov M^T
    g.cov = m.transpose() * grad_cov * m;
    const Eigen::Matrix<double, 2, 3> dm = grad_cov * m * cov.transpose() + grad_cov.transpose() * m * cov;
    const Eigen::Matrix<double, 2, 3> dj = dm * w.transpose();

    Vec3 dt = Vec3::Zero();
    dt.x() += fx * iz * grad_mean.x();
    dt.y() += fy * iz * grad_mean.y();
    dt.z() += -fx * t.x() * iz * iz * grad_mean.x() - fy * t.y() * iz * iz * grad_mean.y();

    dt.x() += -fx * iz * iz * dj(0, 2);
    dt.y() += -fy * iz * iz * dj(1, 2);
    dt.z() += -fx * iz * iz * dj(0, 0) - fy * iz * iz * dj(1, 1) + 2.0 * fx * t.x() * iz * iz * iz * dj(0, 2) +
              2.0 * fy * t.y() * iz * iz * iz * dj(1, 2);

    g.center = w.transpose() * dt;
    return g;
}

namespace {

Mat2 inverse2(const Mat2 &m) {
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    Mat2 inv;
    inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    return inv / det;
}

} // namespace

double eval_gaussian2d(const Vec2 &mean, const Mat2 &cov, const Vec2 &pixel) {
    const Vec2 d = pixel - mean;
    return std::exp(-0.5 * d.dot(inverse2(cov) * d));
}

RenderOutput composite(const SplatBatch &batch, const Camera &camera, std::span<const double> background,
                       const RenderOptions &options, RenderCache *cache) {
    const int channels = batch.channels;
    const std::size_t n = batch.size();
    if (batch.colors.size() != n * channels || batch.opacities.size() != n)
        throw std::invalid_argument("splat batch arrays disagree in length");
    if (background.size() != static_cast<std::size_t>(channels))
        throw std::invalid_argument("background channel count differs from batch");

    const int width = camera.width, height = camera.height;
    const int tile = std::max(1, options.tile_size);
    const int tiles_x = (width + tile - 1) / tile;
    const int tiles_y = (height + tile - 1) / tile;

    std::vector<int> order;
    for (std::size_t i = 0; i < n; ++i)
        if (batch.splats[i].visible) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return batch.splats[a].depth < batch.splats[b].depth; });

    std::vector<Mat2> conic(n);
    for (int i : order) conic[i] = inverse2(batch.splats[i].cov);

    // Depth-ordered per-tile lists.
    std::vector<std::vector<int>> tile_lists(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (int i : order) {
        const SplatScreen &s = batch.splats[i];
        int x0 = 0, x1 = tiles_x - 1, y0 = 0, y1 = tiles_y - 1;
        if (options.radius_cutoff) {
            const double px0 = s.mean.x() - s.radius, px1 = s.mean.x() + s.radius;
            const double py0 = s.mean.y() - s.radius, py1 = s.mean.y() + s.radius;
            if (px1 < 0.0 || py1 < 0.0 || px0 > width || py0 > height) continue;
            x0 = std::max(0, static_cast<int>(std::floor(px0)) / tile);
            x1 = std::min(tiles_x - 1, static_cast<int>(std::floor(px1)) / tile);
            y0 = std::max(0, static_cast<int>(std::floor(py0)) / tile);
            y1 = std::min(tiles_y - 1, static_cast<int>(std::floor(py1)) / tile);
        }
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx) tile_lists[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(i);
    }

    RenderOutput out{ImagePlane(width, height, channels), ImagePlane(width, height, 1)};
    const std::size_t pixels = static_cast<std::size_t>(width) * height;
    std::vector<std::vector<Contribution>> contributions(tile_lists.size());
    std::vector<std::size_t> pixel_offset(pixels, 0);
    std::vector<int> pixel_count(pixels, 0), pixel_tile(pixels, 0);
    std::vector<double> final_t(pixels, 1.0);

    parallel_for(tile_lists.size(), [&](std::size_t t) {
        const int tx = static_cast<int>(t) % tiles_x;
        const int ty = static_cast<int>(t) / tiles_x;
        const auto &list = tile_lists[t];
        auto &contrib = contributions[t];
        std::vector<double> acc(channels);
        for (int y = ty * tile; y < std::min(height, (ty + 1) * tile); ++y) {
            for (int x = tx * tile; x < std::min(width, (tx + 1) * tile); ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * width + x;
                const Vec2 pix(x + 0.5, y + 0.5);
                pixel_offset[p] = contrib.size();
                pixel_tile[p] = static_cast<int>(t);
                std::fill(acc.begin(), acc.end(), 0.0);
                double trans = 1.0;
                for (int i : list) {
                    const SplatScreen &s = batch.splats[i];
                    const Vec2 d = pix - s.mean;
                    if (options.radius_cutoff && d.squaredNorm() > s.radius * s.radius) continue;
                    const double g = std::exp(-0.5 * d.dot(conic[i] * d));
                    const double raw = batch.opacities[i] * g;
                    const bool clamped = raw > kAlphaCap;
                    const double a = clamped ? kAlphaCap : std::max(0.0, raw);
                    const double *col = batch.colors.data() + static_cast<std::size_t>(i) * channels;
                    for (int c = 0; c < channels; ++c) acc[c] += col[c] * a * trans;
                    contrib.push_back({i, a, g, trans, clamped});
                    trans *= 1.0 - a;
                    if (trans < kMinTransmittance) break;
                }
                for (int c = 0; c < channels; ++c) out.color.at(x, y, c) = acc[c] + background[c] * trans;
                out.alpha.at(x, y, 0) = 1.0 - trans;
                pixel_count[p] = static_cast<int>(contrib.size() - pixel_offset[p]);
                final_t[p] = trans;
            }
        }
    });

    if (cache) {
        cache->valid = true;
        cache->width = width;
        cache->height = height;
        cache->order = std::move(order);
        cache->tile_contributions = std::move(contributions);
        cache->pixel_offset = std::move(pixel_offset);
        cache->pixel_count = std::move(pixel_count);
        cache->pixel_tile = std::move(pixel_tile);
        cache->final_transmittance = std::move(final_t);
    }
    return out;
}

SplatGrad composite_backward(const SplatBatch &batch, std::span<const double> background,
                             const ImagePlane &grad_color, const RenderCache &cache) {
    if (!cache.valid) throw std::logic_error("composite_backward: missing forward cache");
    const int channels = batch.channels;
    if (grad_color.width != cache.width || grad_color.height != cache.height || grad_color.channels != channels)
        throw std::invalid_argument("composite_backward: gradient image shape mismatch");
    const std::size_t n = batch.size();

    std::vector<Mat2> conic(n);
    for (int i : cache.order) conic[i] = inverse2(batch.splats[i].cov);

    // Per-contribution gradient records, laid out like the cache, summed afterwards in tile/pixel order.
    struct Record {
        Vec2 mean;
        Mat2 cov;
        double opacity;
    };
    const std::size_t tiles = cache.tile_contributions.size();
    std::vector<std::vector<Record>> records(tiles);
    std::vector<std::vector<double>> color_records(tiles);
    for (std::size_t t = 0; t < tiles; ++t) {
        records[t].resize(cache.tile_contributions[t].size());
        color_records[t].resize(cache.tile_contributions[t].size() * channels);
    }

    const int width = cache.width;
    parallel_for(cache.pixel_count.size(), [&](std::size_t p) {
        const int count = cache.pixel_count[p];
        if (count == 0) return;
        const int t = cache.pixel_tile[p];
        const std::size_t off = cache.pixel_offset[p];
        const auto &contrib = cache.tile_contributions[t];
        const int x = static_cast<int>(p % width), y = static_cast<int>(p / width);
        const Vec2 pix(x + 0.5, y + 0.5);
        const double *g = grad_color.data.data() + p * channels;

        // suffix[c] = sum over later splats of c_j a_j T_j + background T_final
        std::vector<double> suffix(channels);
        for (int c = 0; c < channels; ++c) suffix[c] = background[c] * cache.final_transmittance[p];

        for (int k = count - 1; k >= 0; --k) {
            const Contribution &ct = contrib[off + k];
            const int i = ct.splat;
            const double *col = batch.colors.data() + static_cast<std::size_t>(i) * channels;
            double d_alpha = 0.0;
            double *dcol = color_records[t].data() + (off + k) * channels;
            for (int c = 0; c < channels; ++c) {
                dcol[c] = ct.alpha * ct.transmittance * g[c];
                d_alpha += g[c] * (col[c] * ct.transmittance - suffix[c] / (1.0 - ct.alpha));
                suffix[c] += col[c] * ct.alpha * ct.transmittance;
            }
            Record &r = records[t][off + k];
            r.mean.setZero();
            r.cov.setZero();
            r.opacity = 0.0;
            if (ct.clamped || ct.alpha <= 0.0) continue;
            r.opacity = ct.gaussian * d_alpha;
            const double d_power = batch.opacities[i] * d_alpha * ct.gaussian;
            const Vec2 d = pix - batch.splats[i].mean;
            const Mat2 &q = conic[i];
            // power = -1/2 d^T Q d
            r.mean = d_power * (q * d);
            const Mat2 d_conic = -0.5 * d_power * (d * d.transpose());
            r.cov = -q * d_conic * q;
        }
    });

    SplatGrad out;
    out.mean.assign(n, Vec2::Zero());
    out.cov.assign(n, Mat2::Zero());
    out.colors.assign(n * channels, 0.0);
    out.opacities.assign(n, 0.0);
    for (std::size_t t = 0; t < tiles; ++t) {
        const auto &contrib = cache.tile_contributions[t];
        for (std::size_t k = 0; k < contrib.size(); ++k) {
            const int i = contrib[k].splat;
            out.mean[i] += records[t][k].mean;
            out.cov[i] += records[t][k].cov;
            out.opacities[i] += records[t][k].opacity;
            for (int c = 0; c < channels; ++c)
                out.colors[static_cast<std::size_t>(i) * channels + c] += color_records[t][k * channels + c];
        }
    }
    return out;
}

RenderOutput render_normals(std::span<const SplatScreen> splats, std::span<const Vec3> normals,
                            std::span<const double> opacities, const Camera &camera, const RenderOptions &options,
                            RenderCache *cache) {
    if (normals.size() != splats.size() || opacities.size() != splats.size())
        throw std::invalid_argument("render_normals: array lengths differ");
    SplatBatch batch;
    batch.channels = 3;
    batch.splats.assign(splats.begin(), splats.end());
    batch.opacities.assign(opacities.begin(), opacities.end());
    batch.colors.resize(splats.size() * 3);
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const Vec3 rgb = decode_normal_sh(encode_normal_sh(normals[i]));
        for (int c = 0; c < 3; ++c) batch.colors[i * 3 + c] = rgb[c];
    }
    const double zero[3] = {0.0, 0.0, 0.0};
    return composite(batch, camera, zero, options, cache);
}

} // namespace avatar
