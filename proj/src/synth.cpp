#include "avatar/synth.hpp"

#include "avatar/image_io.hpp"
#include "avatar/metrics.hpp"
#include "avatar/model.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace avatar {

namespace fs = std::filesystem;
using std::numbers::pi;

TemplateMesh make_capsule(int segments, int rings, double radius, double half_length) {
    if (segments < 3 || rings < 1) throw std::invalid_argument("capsule needs >= 3 segments and >= 1 ring");
    const double cap = 0.5 * pi * radius;
    const double meridian = 2.0 * cap + 2.0 * half_length;
    TemplateMesh mesh;
    mesh.vertices.emplace_back(0.0, -half_length - radius, 0.0);
    for (int k = 1; k <= rings; ++k) {
        const double s = meridian * k / (rings + 1);
        double rho, y;
        if (s < cap) {
            const double phi = s / radius;
            rho = radius * std::sin(phi);
            y = -half_length - radius * std::cos(phi);
        } else if (s <= cap + 2.0 * half_length) {
            rho = radius;
            y = -half_length + (s - cap);
        } else {
            const double phi = (s - cap - 2.0 * half_length) / radius;
            rho = radius * std::cos(phi);
            y = half_length + radius * std::sin(phi);
        }
        for (int j = 0; j < segments; ++j) {
            const double theta = 2.0 * pi * j / segments;
            mesh.vertices.emplace_back(rho * std::cos(theta), y, -rho * std::sin(theta));
        }
    }
    const int top = static_cast<int>(mesh.vertices.size());
    mesh.vertices.emplace_back(0.0, half_length + radius, 0.0);
    auto ring = [&](int k, int j) { return 1 + (k - 1) * segments + (j % segments); };
    // Counter-clockwise seen from outside.
    for (int j = 0; j < segments; ++j) mesh.faces.push_back({0, ring(1, j + 1), ring(1, j)});
    for (int k = 1; k < rings; ++k)
        for (int j = 0; j < segments; ++j) {
            const int a = ring(k, j), b = ring(k, j + 1), c = ring(k + 1, j), d = ring(k + 1, j + 1);
            mesh.faces.push_back({a, b, d});
            mesh.faces.push_back({a, d, c});
        }
    for (int j = 0; j < segments; ++j) mesh.faces.push_back({top, ring(rings, j), ring(rings, j + 1)});
    return mesh;
}

std::pair<Vec3, Vec3> capsule_project(const Vec3 &p, double radius, double half_length) {
    const Vec3 axis_point(0.0, std::clamp(p.y(), -half_length, half_length), 0.0);
    Vec3 dir = p - axis_point;
    const double len = dir.norm();
    if (len < 1e-12) dir = Vec3::UnitX();
    else dir /= len;
    return {axis_point + radius * dir, dir};
}

RiggedTemplate capsule_rig(const TemplateMesh &mesh, const SynthConfig &config) {
    RiggedTemplate rig;
    rig.mesh = mesh;
    rig.skeleton = Skeleton({-1, 0}, {Vec3(0.0, -config.half_length - config.radius, 0.0), Vec3::Zero()});
    std::vector<std::vector<SkinInfluence>> rows;
    rows.reserve(mesh.vertex_count());
    for (const Vec3 &v : mesh.vertices) {
        const double t = std::clamp((v.y() + config.blend_width) / (2.0 * config.blend_width), 0.0, 1.0);
        const double w1 = t * t * (3.0 - 2.0 * t);
        rows.push_back({{0, 1.0 - w1}, {1, w1}});
    }
    rig.weights = SkinWeights::from_influences(rows, 2);
    return rig;
}

double capsule_bump(const Vec3 &p, const SynthConfig &config) {
    const double theta = std::atan2(-p.z(), p.x());
    const double extent = config.half_length + config.radius;
    const double along = std::cos(0.5 * pi * std::clamp(p.y() / extent, -1.0, 1.0));
    return config.bump_amplitude * along * (0.6 * std::sin(2.0 * theta) + 0.4 * std::cos(3.0 * theta + 2.5 * p.y() / extent));
}

Vec3 capsule_albedo(const Vec3 &p) {
    const double theta = std::atan2(-p.z(), p.x());
    return {0.55 + 0.3 * std::sin(theta + 4.0 * p.y()), 0.45 + 0.25 * std::cos(2.0 * theta - 3.0 * p.y()),
            0.5 + 0.3 * std::sin(5.0 * p.y() + 1.0)};
}

Camera turntable_camera(double azimuth, const SynthConfig &config) {
    const Vec3 eye(config.camera_distance * std::sin(azimuth), config.camera_height,
                   config.camera_distance * std::cos(azimuth));
    const Vec3 forward = (Vec3::Zero() - eye).normalized();
    const Vec3 right = forward.cross(Vec3::UnitY()).normalized();
    const Vec3 down = forward.cross(right);
    Camera cam;
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.block<3, 3>(0, 0) = r;
    cam.world_to_camera.block<3, 1>(0, 3) = -r * eye;
    cam.width = config.width;
    cam.height = config.height;
    cam.fx = cam.fy = config.focal * config.width / 64.0;
    cam.cx = 0.5 * config.width;
    cam.cy = 0.5 * config.height;
    return cam;
}

PoseFrame sweep_pose(double phase, const SynthConfig &config) {
    PoseFrame p = PoseFrame::identity(2);
    p.joint_rotations[1] = Vec3(0.0, 0.0, config.bend * std::sin(2.0 * pi * phase));
    return p;
}

namespace {

struct SplitPlan {
    std::vector<double> azimuths;
    std::vector<double> phases;
};

DatasetManifest write_split(const fs::path &dir, const std::string &template_rel, const SplitPlan &split,
                            const RiggedTemplate &gt, const std::vector<Vec3> &gt_colors,
                            const std::vector<Vec2> &gt_scales, const SynthConfig &config) {
    fs::create_directories(dir);
    std::vector<Camera> cams;
    std::vector<PoseFrame> poses;
    DatasetManifest m;
    m.template_path = template_rel;
    m.cameras_path = "cameras.json";
    m.poses_path = "poses.json";
    const std::vector<Vec2> rot2d(gt.mesh.face_count(), Vec2(1.0, 0.0));
    for (std::size_t i = 0; i < split.azimuths.size(); ++i) {
        const Camera cam = turntable_camera(split.azimuths[i], config);
        const PoseFrame pose = sweep_pose(split.phases[i], config);
        const std::vector<Vec3> posed =
            skin_vertices(gt.mesh.vertices, gt.weights, bone_transforms(gt.skeleton, pose));
        const MeshRender r =
            render_mesh(gt.mesh, posed, gt_colors, gt_scales, rot2d, kSurfaceEpsilon, cam, Vec3::Zero());
        ImagePlane mask(cam.width, cam.height, 1);
        for (std::size_t p = 0; p < mask.pixel_count(); ++p) mask.data[p] = r.alpha.data[p] > 0.5 ? 1.0 : 0.0;

        char name[64];
        FrameFiles files;
        std::snprintf(name, sizeof(name), "color_%03zu.png", i);
        files.color = name;
        write_png(dir / name, r.color, 8);
        std::snprintf(name, sizeof(name), "normal_%03zu.png", i);
        files.normal = name;
        write_normal_png(dir / name, r.normal);
        std::snprintf(name, sizeof(name), "mask_%03zu.png", i);
        files.mask = name;
        write_png(dir / name, mask, 8);
        m.frames.push_back(files);
        cams.push_back(cam);
        poses.push_back(pose);
    }
    save_cameras(dir / m.cameras_path, cams);
    save_poses(dir / m.poses_path, poses);
    return m;
}

} // namespace

SynthResult synth_scene(const SynthConfig &config, const fs::path &out_dir) {
    if (config.views < 1) throw DataError("synth: at least one view is required");
    if (config.heldout_views < 0 || config.heldout_views > config.views)
        throw DataError("synth: heldout_views must lie in [0, views]");
    fs::create_directories(out_dir);

    const TemplateMesh coarse = make_capsule(config.segments, config.rings, config.radius, config.half_length);
    const RiggedTemplate tmpl = capsule_rig(coarse, config);

    TemplateMesh fine = coarse;
    for (int s = 0; s < config.gt_subdivisions; ++s) fine = midpoint_subdivide(fine);
    for (Vec3 &v : fine.vertices) {
        const auto [surface, normal] = capsule_project(v, config.radius, config.half_length);
        v = surface + capsule_bump(surface, config) * normal;
    }
    SynthResult result;
    result.gt = capsule_rig(fine, config);
    const RiggedTemplate &gt = result.gt;
    std::vector<Vec3> gt_colors(fine.face_count());
    std::vector<Vec2> gt_scales(fine.face_count());
    for (std::size_t f = 0; f < fine.face_count(); ++f) {
        const Face &t = fine.faces[f];
        gt_colors[f] = capsule_albedo(face_centroid(fine, fine.vertices, f));
        gt_scales[f] = initial_log_scale(triangle_area(fine.vertices[t[0]], fine.vertices[t[1]], fine.vertices[t[2]]),
                                         config.initial_scale);
    }
    result.gt.face_colors = gt_colors;

    save_template(out_dir / "template.json", tmpl);
    save_obj(out_dir / "gt_mesh.obj", fine);
    save_template(out_dir / "gt_template.json", result.gt);
    result.baseline_v2v_mm = metric_v2v(fine, coarse, 100000, config.seed);

    SplitPlan train, heldout;
    for (int i = 0; i < config.views; ++i) {
        train.azimuths.push_back(2.0 * pi * i / config.views);
        train.phases.push_back(static_cast<double>(i) / config.views);
    }
    for (int k = 0; k < config.heldout_views; ++k) {
        const double i = std::floor(static_cast<double>(k) * config.views / std::max(1, config.heldout_views)) + 0.5;
        heldout.azimuths.push_back(2.0 * pi * i / config.views);
        heldout.phases.push_back(i / config.views);
    }

    result.manifest = write_split(out_dir, "template.json", train, gt, gt_colors, gt_scales, config);
    result.manifest.gt_mesh = "gt_mesh.obj";
    result.manifest.baseline_v2v_mm = result.baseline_v2v_mm;
    if (config.heldout_views > 0) {
        DatasetManifest h = write_split(out_dir / "heldout", "../template.json", heldout, gt, gt_colors, gt_scales, config);
        h.gt_mesh = "../gt_mesh.obj";
        h.baseline_v2v_mm = result.baseline_v2v_mm;
        save_manifest(out_dir / "heldout" / "manifest.json", h);
        result.manifest.heldout_manifest = "heldout/manifest.json";
    }
    save_manifest(out_dir / "manifest.json", result.manifest);
    return result;
}

} // namespace avatar
