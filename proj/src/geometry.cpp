#include "avatar/geometry.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

namespace avatar {

void TemplateMesh::validate() const {
    const auto n = static_cast<long>(vertices.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const Face &t = faces[f];
        for (int idx : t) {
            if (idx < 0 || idx >= n)
                throw DataError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                                " outside [0, " + std::to_string(n) + ")");
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw DataError("face " + std::to_string(f) + " repeats a vertex index");
    }
}

Vec3 face_centroid(const TemplateMesh &mesh, std::span<const Vec3> posed_vertices, std::size_t face) {
    if (face >= mesh.faces.size())
        throw std::out_of_range("face index " + std::to_string(face) + " out of range");
    if (posed_vertices.size() != mesh.vertex_count())
        throw std::invalid_argument("posed vertex count does not match the template");
    const Face &t = mesh.faces[face];
    return (posed_vertices[t[0]] + posed_vertices[t[1]] + posed_vertices[t[2]]) / 3.0;
}

double triangle_area(const Vec3 &a, const Vec3 &b, const Vec3 &c) { return 0.5 * (b - a).cross(c - a).norm(); }

std::optional<Vec3> face_normal(const Vec3 &v0, const Vec3 &v1, const Vec3 &v2) {
    const Vec3 n = (v1 - v0).cross(v2 - v0);
    const double len = n.norm();
    if (0.5 * len < kDegenerateArea) return std::nullopt;
    return n / len;
}

std::optional<Vec3> face_normal(std::span<const Vec3> posed_vertices, const Face &face) {
    return face_normal(posed_vertices[face[0]], posed_vertices[face[1]], posed_vertices[face[2]]);
}

std::optional<FaceFrame> build_face_frame(const Vec3 &v0, const Vec3 &v1, const Vec3 &v2) {
    const auto n = face_normal(v0, v1, v2);
    if (!n) return std::nullopt;
    FaceFrame frame;
    frame.r0 = *n;
    frame.r1 = (v1 - v0).normalized();
    frame.r2 = frame.r0.cross(frame.r1).normalized();
    frame.centroid = (v0 + v1 + v2) / 3.0;
    return frame;
}

std::optional<FaceFrame> build_face_frame(std::span<const Vec3> posed_vertices, const Face &face) {
    return build_face_frame(posed_vertices[face[0]], posed_vertices[face[1]], posed_vertices[face[2]]);
}

Mat3 lift_rotation(const FaceFrame &frame, const Vec2 &rot2d) {
    const double len = rot2d.norm();
    if (!(len > 0.0)) throw std::domain_error("undefined in-plane rotation");
    const double c = rot2d.x() / len;
    const double s = rot2d.y() / len;
    Mat3 r;
    r.col(0) = frame.r0;
    r.col(1) = c * frame.r1 + s * frame.r2;
    r.col(2) = -s * frame.r1 + c * frame.r2;
    return r;
}

Mat3 build_covariance(const Mat3 &rotation, const Vec3 &scales) {
    if (!(scales.minCoeff() > 0.0)) throw std::domain_error("covariance scales must be positive");
    const Mat3 rs = rotation * scales.asDiagonal();
    return rs * rs.transpose();
}

Vec3 normalize_backward(const Vec3 &x, const Vec3 &grad_unit) {
    const double len = x.norm();
    const Vec3 y = x / len;
    return (grad_unit - y * y.dot(grad_unit)) / len;
}

std::array<Vec3, 3> face_normal_backward(const Vec3 &v0, const Vec3 &v1, const Vec3 &v2, const Vec3 &grad_normal) {
    const Vec3 a = v1 - v0;
    const Vec3 b = v2 - v0;
    const Vec3 dn = normalize_backward(a.cross(b), grad_normal);
    const Vec3 da = b.cross(dn);
    const Vec3 db = dn.cross(a);
    return {-(da + db), da, db};
}

std::array<Vec3, 3> face_frame_backward(const Vec3 &v0, const Vec3 &v1, const Vec3 &v2, const Vec3 &grad_r0,
                                        const Vec3 &grad_r1, const Vec3 &grad_r2) {
    const Vec3 e = v1 - v0;
    const Vec3 r0 = (v1 - v0).cross(v2 - v0).normalized();
    const Vec3 r1 = e.normalized();
    const Vec3 c = r0.cross(r1);

    const Vec3 dc = normalize_backward(c, grad_r2);
    const Vec3 d_r0 = grad_r0 + r1.cross(dc);
    const Vec3 d_r1 = grad_r1 + dc.cross(r0);

    auto grads = face_normal_backward(v0, v1, v2, d_r0);
    const Vec3 de = normalize_backward(e, d_r1);
    grads[0] -= de;
    grads[1] += de;
    return grads;
}

std::array<Vec3, 3> lift_rotation_backward(const Vec2 &rot2d, const Mat3 &grad_rotation) {
    const double len = rot2d.norm();
    const double c = rot2d.x() / len;
    const double s = rot2d.y() / len;
    return {grad_rotation.col(0).eval(), (c * grad_rotation.col(1) - s * grad_rotation.col(2)).eval(),
            (s * grad_rotation.col(1) + c * grad_rotation.col(2)).eval()};
}

CovarianceGrad build_covariance_backward(const Mat3 &rotation, const Vec3 &scales, const Mat3 &grad_cov) {
    // cov = sum_k s_k^2 r_k r_k^T
    const Mat3 sym = grad_cov + grad_cov.transpose();
    CovarianceGrad g;
    const Vec3 sq = scales.cwiseProduct(scales);
    g.rotation = sym * rotation * sq.asDiagonal();
    for (int k = 0; k < 3; ++k) {
        const Vec3 r = rotation.col(k);
        g.scales[k] = 2.0 * scales[k] * r.dot(grad_cov * r);
    }
    return g;
}

std::vector<std::pair<int, int>> face_adjacency(const TemplateMesh &mesh) {
    std::map<std::pair<int, int>, std::vector<int>> edge_faces;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face &t = mesh.faces[f];
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            edge_faces[{a, b}].push_back(static_cast<int>(f));
        }
    }
    std::vector<std::pair<int, int>> pairs;
    for (const auto &[edge, faces] : edge_faces) {
        for (std::size_t i = 0; i < faces.size(); ++i)
            for (std::size_t j = i + 1; j < faces.size(); ++j)
                pairs.emplace_back(std::min(faces[i], faces[j]), std::max(faces[i], faces[j]));
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

TemplateMesh midpoint_subdivide(const TemplateMesh &mesh, std::vector<std::pair<int, int>> *edges) {
    TemplateMesh out;
    out.vertices = mesh.vertices;
    std::map<std::pair<int, int>, int> midpoint;
    if (edges) edges->clear();
    auto mid = [&](int a, int b) {
        const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        const int idx = static_cast<int>(out.vertices.size());
        out.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
        if (edges) edges->push_back(key);
        midpoint.emplace(key, idx);
        return idx;
    };
    out.faces.reserve(mesh.faces.size() * 4);
    for (const Face &t : mesh.faces) {
        const int m01 = mid(t[0], t[1]);
        const int m12 = mid(t[1], t[2]);
        const int m20 = mid(t[2], t[0]);
        out.faces.push_back({t[0], m01, m20});
        out.faces.push_back({m01, t[1], m12});
        out.faces.push_back({m20, m12, t[2]});
        out.faces.push_back({m01, m12, m20});
    }
    return out;
}

} // namespace avatar
