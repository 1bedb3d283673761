#include "avatar/metrics.hpp"

#include "avatar/losses.hpp"
#include "avatar/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace avatar {

double psnr(const ImagePlane &pred, const ImagePlane &gt) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("psnr: image shapes differ");
    if (pred.data.empty()) throw std::invalid_argument("psnr: empty image");
    double se = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - gt.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(pred.data.size());
    if (mse == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(1.0 / mse);
}

ImageMetrics metric_images(const ImagePlane &pred, const ImagePlane &gt) { return {psnr(pred, gt), ssim(pred, gt)}; }

// Ericson, closest point on triangle by Voronoi region.
Vec3 closest_point_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

TriangleBvh::TriangleBvh(const TemplateMesh &mesh) : mesh_(mesh) {
    if (mesh.face_count() == 0) throw std::invalid_argument("bvh: mesh has no faces");
    faces_.resize(mesh.face_count());
    std::iota(faces_.begin(), faces_.end(), 0);
    centroids_.resize(mesh.face_count());
    for (std::size_t f = 0; f < mesh.face_count(); ++f) centroids_[f] = face_centroid(mesh, mesh.vertices, f);
    nodes_.reserve(2 * mesh.face_count());
    build(0, static_cast<int>(faces_.size()));
}

int TriangleBvh::build(int begin, int end) {
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int i = begin; i < end; ++i)
        for (int k : mesh_.faces[faces_[i]]) {
            node.lo = node.lo.cwiseMin(mesh_.vertices[k]);
            node.hi = node.hi.cwiseMax(mesh_.vertices[k]);
        }
    node.begin = begin;
    node.end = end;
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= 4) return index;

    Vec3 clo = Vec3::Constant(std::numeric_limits<double>::infinity()), chi = -clo;
    for (int i = begin; i < end; ++i) {
        clo = clo.cwiseMin(centroids_[faces_[i]]);
        chi = chi.cwiseMax(centroids_[faces_[i]]);
    }
    int axis = 0;
    (chi - clo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(faces_.begin() + begin, faces_.begin() + mid, faces_.begin() + end, [&](int x, int y) {
        const double cx = centroids_[x][axis], cy = centroids_[y][axis];
        return cx < cy || (cx == cy && x < y);
    });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
}

TriangleBvh::Hit TriangleBvh::closest(const Vec3 &p) const {
    auto box_dist2 = [&](const Node &n) { return (p - p.cwiseMax(n.lo).cwiseMin(n.hi)).squaredNorm(); };
    Hit best;
    double best_d2 = std::numeric_limits<double>::infinity();
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node &n = nodes_[stack[--top]];
        if (box_dist2(n) >= best_d2) continue;
        if (n.left < 0) {
            for (int i = n.begin; i < n.end; ++i) {
                const Face &f = mesh_.faces[faces_[i]];
                const Vec3 q = closest_point_on_triangle(p, mesh_.vertices[f[0]], mesh_.vertices[f[1]], mesh_.vertices[f[2]]);
                const double d2 = (q - p).squaredNorm();
                if (d2 < best_d2 || (d2 == best_d2 && faces_[i] < best.face)) {
                    best_d2 = d2;
                    best.point = q;
                    best.face = faces_[i];
                }
            }
            continue;
        }
        const Node &l = nodes_[n.left], &r = nodes_[n.right];
        // Visit the nearer child first.
        if (box_dist2(l) < box_dist2(r)) {
            stack[top++] = n.right;
            stack[top++] = n.left;
        } else {
            stack[top++] = n.left;
            stack[top++] = n.right;
        }
    }
    best.distance = std::sqrt(best_d2);
    return best;
}

std::vector<SurfaceSample> sample_surface(const TemplateMesh &mesh, std::size_t count, std::uint64_t seed) {
    if (mesh.face_count() == 0) throw std::invalid_argument("cannot sample an empty mesh");
    std::vector<double> cumulative(mesh.face_count());
    double total = 0.0;
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const Face &t = mesh.faces[f];
        total += triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
        cumulative[f] = total;
    }
    if (!(total > 0.0)) throw std::invalid_argument("cannot sample a mesh with zero area");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<SurfaceSample> out(count);
    for (SurfaceSample &s : out) {
        const double pick = u(rng) * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
        const int f = static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(), cumulative.size() - 1));
        const double r1 = std::sqrt(u(rng)), r2 = u(rng);
        const Face &t = mesh.faces[f];
        s.point = (1.0 - r1) * mesh.vertices[t[0]] + r1 * (1.0 - r2) * mesh.vertices[t[1]] + r1 * r2 * mesh.vertices[t[2]];
        s.face = f;
    }
    return out;
}

Vec3 surface_center(const TemplateMesh &mesh) {
    Vec3 sum = Vec3::Zero();
    double area = 0.0;
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const Face &t = mesh.faces[f];
        const double a = triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
        sum += a * face_centroid(mesh, mesh.vertices, f);
        area += a;
    }
    if (!(area > 0.0)) throw std::invalid_argument("mesh has zero surface area");
    return sum / area;
}

namespace {

TemplateMesh centered(const TemplateMesh &m) {
    TemplateMesh out = m;
    const Vec3 c = surface_center(m);
    for (Vec3 &v : out.vertices) v -= c;
    return out;
}

struct Directed {
    double distance = 0.0;
    double nc = 0.0;
};

// Mean distance from samples of `from` to the surface of `to`.
Directed directed(const TemplateMesh &from, const TemplateMesh &to, std::size_t samples, std::uint64_t seed) {
    const std::vector<SurfaceSample> pts = sample_surface(from, samples, seed);
    const TriangleBvh bvh(to);
    auto normal_of = [](const TemplateMesh &m, int f) {
        return face_normal(std::span<const Vec3>(m.vertices), m.faces[f]).value_or(Vec3::Zero());
    };
    const int blocks = 64; // fixed so the reduction order ignores the thread count
    std::vector<Directed> partial(blocks);
    const std::size_t chunk = (pts.size() + blocks - 1) / blocks;
    parallel_blocks(blocks, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            Directed acc;
            for (std::size_t i = b * chunk; i < std::min(pts.size(), (b + 1) * chunk); ++i) {
                const TriangleBvh::Hit h = bvh.closest(pts[i].point);
                acc.distance += h.distance;
                acc.nc += 1.0 - normal_of(from, pts[i].face).dot(normal_of(to, h.face));
            }
            partial[b] = acc;
        }
    });
    Directed total;
    for (const Directed &d : partial) {
        total.distance += d.distance;
        total.nc += d.nc;
    }
    total.distance /= static_cast<double>(pts.size());
    total.nc /= static_cast<double>(pts.size());
    return total;
}

} // namespace

SurfaceDistance surface_distance(const TemplateMesh &a, const TemplateMesh &b, std::size_t samples, std::uint64_t seed) {
    if (a.face_count() == 0 || b.face_count() == 0) throw std::invalid_argument("v2v: empty mesh");
    if (samples == 0) throw std::invalid_argument("v2v: sample count must be positive");
    const TemplateMesh ca = centered(a), cb = centered(b);
    const Directed ab = directed(ca, cb, samples, seed);
    const Directed ba = directed(cb, ca, samples, seed);
    return {500.0 * (ab.distance + ba.distance), 0.5 * (ab.nc + ba.nc)};
}

double metric_v2v(const TemplateMesh &a, const TemplateMesh &b, std::size_t samples, std::uint64_t seed) {
    return surface_distance(a, b, samples, seed).v2v_mm;
}

std::string MetricsReport::to_json() const {
    using nlohmann::json;
    auto opt = [](const std::optional<double> &v) -> json {
        if (!v) return nullptr;
        if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
        return *v;
    };
    json j;
    j["psnr_db"] = opt(psnr);
    j["ssim"] = opt(ssim);
    j["v2v_mm"] = opt(v2v_mm);
    j["nc"] = opt(nc);
    j["baseline_v2v_mm"] = opt(baseline_v2v_mm);
    j["views"] = views;
    j["lpips"] = nullptr;
    j["notes"] = "lpips is not computed: it needs a pretrained network. nc is the mean of 1 - dot(n_a, n_b) at "
                 "nearest surface points, both directions.";
    return j.dump(2) + "\n";
}

} // namespace avatar
