#pragma once

#include "avatar/fields.hpp"
#include "avatar/geometry.hpp"
#include "avatar/skinning.hpp"
#include "avatar/splatting.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace avatar {

struct ModelOptions {
    HashGridConfig grid; // aabb is recomputed from the template
    double aabb_padding = 0.1; // fraction of the template extent added on each side
    double epsilon = kSurfaceEpsilon;
    double initial_scale = 0.5; // s2 = s3 = initial_scale * sqrt(face area)
};

/// Template mesh with one surface-aligned Gaussian per face, plus the two hash fields.
///
/// Trainable: log_scales, skeleton.rest_joints, both fields, optional per-frame poses.
/// Frozen: rot2d, skin weights, opacity (always 1).
struct AvatarModel {
    TemplateMesh mesh;
    Skeleton skeleton;
    SkinWeights weights;
    std::vector<Vec2> log_scales; // log s2, log s3 per face
    std::vector<Vec2> rot2d;
    HashField displacement;
    HashField color;
    double epsilon = kSurfaceEpsilon;
    std::vector<PoseFrame> frame_poses; // refined poses; empty unless pose refinement ran

    // Derived from mesh, rebuilt by refresh_derived().
    std::vector<std::pair<int, int>> adjacency;
    std::vector<Vec3> color_queries; // template face centroids

    static AvatarModel create(TemplateMesh mesh, Skeleton skeleton, SkinWeights weights, const ModelOptions &options,
                              std::uint64_t seed);
    void refresh_derived();

    /// v + displacement(v) for every template vertex.
    std::vector<Vec3> canonical_vertices() const;
    /// Color field evaluated at the template face centroids.
    std::vector<Vec3> face_colors() const;
    SplatGeometry splat(std::size_t face) const;
};

/// Scale pair for a face of the given area under ModelOptions::initial_scale.
Vec2 initial_log_scale(double area, double factor);

/// Everything the backward pass needs from one posed render.
struct FrameState {
    PoseFrame pose;
    std::vector<Vec3> displacement;
    std::vector<Vec3> displaced;
    std::vector<Vec3> posed;
    std::vector<Mat4> bones;
    std::vector<char> valid; // face produced a splat this frame
    std::vector<Mat3> rotation;
    std::vector<Vec3> scales;
    std::vector<Mat3> cov;
    std::vector<Vec3> centers;
    std::vector<Vec3> normals;
    std::vector<Vec3> colors;
    SplatBatch batch; // 6 channels: rgb then signed normal
    RenderCache cache;
    ImagePlane color_image;
    ImagePlane normal_image;
    ImagePlane alpha_image;
};

/// Displacement, skinning, per-face splat assembly, projection and the joint
/// color/normal composite. Caches field activations for backward_frame().
FrameState forward_frame(AvatarModel &model, const PoseFrame &pose, const Camera &camera, const Vec3 &background,
                         const RenderOptions &options = {});

struct MeshRender {
    ImagePlane color;
    ImagePlane normal;
    ImagePlane alpha;
};

/// Renders one flat splat per face of an already posed mesh with fixed per-face colors.
/// Faces without a frame are skipped.
MeshRender render_mesh(const TemplateMesh &mesh, std::span<const Vec3> posed, std::span<const Vec3> face_colors,
                       std::span<const Vec2> log_scales, std::span<const Vec2> rot2d, double epsilon,
                       const Camera &camera, const Vec3 &background, const RenderOptions &options = {});

struct ModelGrad {
    std::vector<Vec2> log_scales;
    std::vector<Vec3> joints;
    std::vector<Vec3> pose_rotations;
    Vec3 pose_translation = Vec3::Zero();

    void reset(const AvatarModel &model);
};

/// Chains image and posed-vertex gradients back to every trainable quantity.
/// Field gradients accumulate inside the fields; the rest goes to grad.
void backward_frame(AvatarModel &model, const FrameState &state, const Camera &camera, const Vec3 &background,
                    const ImagePlane &grad_color, const ImagePlane &grad_normal, std::span<const Vec3> grad_posed,
                    ModelGrad &grad);

} // namespace avatar
