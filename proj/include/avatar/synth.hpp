#pragma once

#include "avatar/formats.hpp"

#include <cstdint>
#include <filesystem>

namespace avatar {

struct SynthConfig {
    int views = 20;
    int heldout_views = 5;
    int width = 64;
    int height = 64;
    int segments = 32; // around the axis
    int rings = 32; // between the poles; template faces = 2 * segments * rings
    int gt_subdivisions = 1;
    double radius = 0.15;
    double half_length = 0.15; // half the cylinder section
    double bump_amplitude = 0.015;
    double bend = 0.5; // peak joint-1 bend of the pose sweep, radians
    double camera_distance = 1.5;
    double camera_height = 0.1;
    double focal = 130.0; // pixels at 64 px; scaled with the width
    double blend_width = 0.1; // half-width of the skin-weight transition around joint 1
    double initial_scale = 0.5;
    std::uint64_t seed = 0;
};

/// Closed capsule along y, centered at the origin. Rings are evenly spaced in arc length.
TemplateMesh make_capsule(int segments, int rings, double radius, double half_length);

/// Nearest point on the capsule surface and the outward normal there.
std::pair<Vec3, Vec3> capsule_project(const Vec3 &p, double radius, double half_length);

/// Two bones: joint 0 at the bottom pole, joint 1 at the middle. Weights blend smoothly in y.
RiggedTemplate capsule_rig(const TemplateMesh &mesh, const SynthConfig &config);

/// Ground-truth surface offset along the capsule normal, in meters.
double capsule_bump(const Vec3 &canonical, const SynthConfig &config);
/// Ground-truth albedo in [0, 1].
Vec3 capsule_albedo(const Vec3 &canonical);

/// Turntable camera looking at the origin from azimuth `azimuth` (radians).
Camera turntable_camera(double azimuth, const SynthConfig &config);
PoseFrame sweep_pose(double phase, const SynthConfig &config);

struct SynthResult {
    DatasetManifest manifest;
    RiggedTemplate gt;
    double baseline_v2v_mm = 0.0;
};

/// Writes manifest.json, template.json, gt_mesh.obj, cameras/poses and per-frame color,
/// normal and mask PNGs under out_dir, plus a held-out split under out_dir/heldout.
SynthResult synth_scene(const SynthConfig &config, const std::filesystem::path &out_dir);

} // namespace avatar
