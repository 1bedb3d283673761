#include "avatar/model.hpp"

#include "avatar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace avatar {

Vec2 initial_log_scale(double area, double factor) {
    const double s = factor * std::sqrt(std::max(area, kDegenerateArea));
    return Vec2::Constant(std::log(s));
}

AvatarModel AvatarModel::create(TemplateMesh mesh, Skeleton skeleton, SkinWeights weights, const ModelOptions &options,
                                std::uint64_t seed) {
    mesh.validate();
    if (weights.vertex_count() != mesh.vertex_count())
        throw DataError("skin weight rows differ from template vertex count");
    AvatarModel m;
    m.epsilon = options.epsilon;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3 &v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const Vec3 pad = (hi - lo).cwiseMax(1e-6) * options.aabb_padding;
    HashGridConfig grid = options.grid;
    grid.aabb_min = lo - pad;
    grid.aabb_max = hi + pad;

    m.log_scales.reserve(mesh.face_count());
    for (const Face &f : mesh.faces)
        m.log_scales.push_back(initial_log_scale(
            triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]), options.initial_scale));
    m.rot2d.assign(mesh.face_count(), Vec2(1.0, 0.0));
    m.mesh = std::move(mesh);
    m.skeleton = std::move(skeleton);
    m.weights = std::move(weights);
    m.displacement = HashField(grid, HashField::Activation::None, seed);
    m.color = HashField(grid, HashField::Activation::Sigmoid, seed + 1);
    m.refresh_derived();
    return m;
}

void AvatarModel::refresh_derived() {
    adjacency = face_adjacency(mesh);
    color_queries.resize(mesh.face_count());
    for (std::size_t f = 0; f < mesh.face_count(); ++f) color_queries[f] = face_centroid(mesh, mesh.vertices, f);
}

std::vector<Vec3> AvatarModel::canonical_vertices() const {
    std::vector<Vec3> out(mesh.vertex_count());
    parallel_for(out.size(), [&](std::size_t v) { out[v] = mesh.vertices[v] + displacement.evaluate(mesh.vertices[v]); });
    return out;
}

std::vector<Vec3> AvatarModel::face_colors() const {
    std::vector<Vec3> out(color_queries.size());
    parallel_for(out.size(), [&](std::size_t f) { out[f] = color.evaluate(color_queries[f]); });
    return out;
}

SplatGeometry AvatarModel::splat(std::size_t face) const {
    SplatGeometry g;
    g.s2 = std::exp(log_scales[face].x());
    g.s3 = std::exp(log_scales[face].y());
    g.rot2d = rot2d[face];
    return g;
}

FrameState forward_frame(AvatarModel &model, const PoseFrame &pose, const Camera &camera, const Vec3 &background,
                         const RenderOptions &options) {
    FrameState st;
    st.pose = pose;
    const auto &mesh = model.mesh;
    st.displacement = model.displacement.forward(mesh.vertices);
    st.displaced.resize(mesh.vertex_count());
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) st.displaced[v] = mesh.vertices[v] + st.displacement[v];
    st.bones = bone_transforms(model.skeleton, pose);
    st.posed = skin_vertices(st.displaced, model.weights, st.bones);
    st.colors = model.color.forward(model.color_queries);

    const std::size_t nf = mesh.face_count();
    st.valid.assign(nf, 0);
    st.rotation.assign(nf, Mat3::Identity());
    st.scales.assign(nf, Vec3::Ones());
    st.cov.assign(nf, Mat3::Identity());
    st.centers.assign(nf, Vec3::Zero());
    st.normals.assign(nf, Vec3::Zero());

    SplatBatch &batch = st.batch;
    batch.channels = 6;
    batch.splats.assign(nf, SplatScreen{});
    batch.colors.assign(nf * 6, 0.0);
    batch.opacities.assign(nf, 1.0);

    parallel_for(nf, [&](std::size_t f) {
        const auto frame = build_face_frame(st.posed, mesh.faces[f]);
        if (!frame) return;
        st.valid[f] = 1;
        st.rotation[f] = lift_rotation(*frame, model.rot2d[f]);
        st.scales[f] = model.splat(f).scales(model.epsilon);
        st.cov[f] = build_covariance(st.rotation[f], st.scales[f]);
        st.centers[f] = frame->centroid;
        st.normals[f] = frame->r0;
        batch.splats[f] = project_splat(st.centers[f], st.cov[f], camera);
        const Vec3 n = decode_normal_sh(encode_normal_sh(frame->r0));
        for (int c = 0; c < 3; ++c) {
            batch.colors[f * 6 + c] = st.colors[f][c];
            batch.colors[f * 6 + 3 + c] = n[c];
        }
    });

    const double bg[6] = {background.x(), background.y(), background.z(), 0.0, 0.0, 0.0};
    RenderOutput out = composite(batch, camera, bg, options, &st.cache);
    st.color_image = slice_channels(out.color, 0, 3);
    st.normal_image = slice_channels(out.color, 3, 3);
    st.alpha_image = std::move(out.alpha);
    return st;
}

MeshRender render_mesh(const TemplateMesh &mesh, std::span<const Vec3> posed, std::span<const Vec3> face_colors,
                       std::span<const Vec2> log_scales, std::span<const Vec2> rot2d, double epsilon,
                       const Camera &camera, const Vec3 &background, const RenderOptions &options) {
    const std::size_t nf = mesh.face_count();
    if (face_colors.size() != nf || log_scales.size() != nf || rot2d.size() != nf)
        throw std::invalid_argument("render_mesh: per-face arrays must match the face count");
    SplatBatch batch;
    batch.channels = 6;
    batch.splats.assign(nf, SplatScreen{});
    batch.colors.assign(nf * 6, 0.0);
    batch.opacities.assign(nf, 1.0);
    parallel_for(nf, [&](std::size_t f) {
        const auto frame = build_face_frame(posed, mesh.faces[f]);
        if (!frame) return;
        const Vec3 scales(epsilon, std::exp(log_scales[f].x()), std::exp(log_scales[f].y()));
        const Mat3 cov = build_covariance(lift_rotation(*frame, rot2d[f]), scales);
        batch.splats[f] = project_splat(frame->centroid, cov, camera);
        const Vec3 n = decode_normal_sh(encode_normal_sh(frame->r0));
        for (int c = 0; c < 3; ++c) {
            batch.colors[f * 6 + c] = face_colors[f][c];
            batch.colors[f * 6 + 3 + c] = n[c];
        }
    });
    const double bg[6] = {background.x(), background.y(), background.z(), 0.0, 0.0, 0.0};
    RenderOutput out = composite(batch, camera, bg, options, nullptr);
    return {slice_channels(out.color, 0, 3), slice_channels(out.color, 3, 3), std::move(out.alpha)};
}

void ModelGrad::reset(const AvatarModel &model) {
    log_scales.assign(model.mesh.face_count(), Vec2::Zero());
    joints.assign(model.skeleton.joint_count(), Vec3::Zero());
    pose_rotations.assign(model.skeleton.joint_count(), Vec3::Zero());
    pose_translation.setZero();
}

void backward_frame(AvatarModel &model, const FrameState &st, const Camera &camera, const Vec3 &background,
                    const ImagePlane &grad_color, const ImagePlane &grad_normal, std::span<const Vec3> grad_posed,
                    ModelGrad &grad) {
    const auto &mesh = model.mesh;
    const std::size_t nf = mesh.face_count();
    const std::size_t nv = mesh.vertex_count();
    if (grad.log_scales.size() != nf) grad.reset(model);

    ImagePlane g6(grad_color.width, grad_color.height, 6);
    for (std::size_t p = 0; p < g6.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c) {
            g6.data[p * 6 + c] = grad_color.data[p * 3 + c];
            g6.data[p * 6 + 3 + c] = grad_normal.data[p * 3 + c];
        }
    const double bg[6] = {background.x(), background.y(), background.z(), 0.0, 0.0, 0.0};
    const SplatGrad sg = composite_backward(st.batch, bg, g6, st.cache);

    // Per-face vertex gradients, scattered afterwards in face order.
    std::vector<std::array<Vec3, 3>> face_vertex_grad(nf);
    std::vector<Vec3> color_grad(nf, Vec3::Zero());
    parallel_for(nf, [&](std::size_t f) {
        face_vertex_grad[f] = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
        if (!st.valid[f]) return;
        for (int c = 0; c < 3; ++c) color_grad[f][c] = sg.colors[f * 6 + c];
        if (!st.batch.splats[f].visible) return;
        const Vec3 d_normal(sg.colors[f * 6 + 3], sg.colors[f * 6 + 4], sg.colors[f * 6 + 5]);

        const ProjectionGrad pg = project_splat_backward(st.centers[f], st.cov[f], camera, sg.mean[f], sg.cov[f]);
        const CovarianceGrad cg = build_covariance_backward(st.rotation[f], st.scales[f], pg.cov);
        grad.log_scales[f] += Vec2(cg.scales[1] * st.scales[f][1], cg.scales[2] * st.scales[f][2]);

        auto d_frame = lift_rotation_backward(model.rot2d[f], cg.rotation);
        d_frame[0] += d_normal;
        const Face &t = mesh.faces[f];
        const Vec3 &v0 = st.posed[t[0]], &v1 = st.posed[t[1]], &v2 = st.posed[t[2]];
        auto dv = face_frame_backward(v0, v1, v2, d_frame[0], d_frame[1], d_frame[2]);
        for (auto &d : dv) d += pg.center / 3.0;
        face_vertex_grad[f] = dv;
    });

    std::vector<Vec3> d_posed(nv, Vec3::Zero());
    if (!grad_posed.empty()) {
        if (grad_posed.size() != nv) throw std::invalid_argument("posed-vertex gradient length mismatch");
        for (std::size_t v = 0; v < nv; ++v) d_posed[v] = grad_posed[v];
    }
    for (std::size_t f = 0; f < nf; ++f)
        for (int k = 0; k < 3; ++k) d_posed[mesh.faces[f][k]] += face_vertex_grad[f][k];

    const SkinGrad skin = skin_vertices_backward(st.displaced, model.weights, st.bones, d_posed);
    const BoneTransformGrad bg_grad = bone_transforms_backward(model.skeleton, st.pose, skin.transforms);
    for (std::size_t j = 0; j < model.skeleton.joint_count(); ++j) {
        grad.joints[j] += bg_grad.rest_joints[j];
        grad.pose_rotations[j] += bg_grad.joint_rotations[j];
    }
    grad.pose_translation += bg_grad.translation;

    model.displacement.backward(skin.vertices);
    model.color.backward(color_grad);
}

} // namespace avatar
