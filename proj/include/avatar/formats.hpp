#pragma once

#include "avatar/geometry.hpp"
#include "avatar/skinning.hpp"
#include "avatar/splatting.hpp"
#include "avatar/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace avatar {

/// Template mesh plus rig. face_colors is filled by colored exports and empty otherwise.
struct RiggedTemplate {
    TemplateMesh mesh;
    Skeleton skeleton;
    SkinWeights weights;
    std::vector<Vec3> face_colors;
};

// Template schema (JSON object):
//   vertices: [[x,y,z], ...]        faces: [[a,b,c], ...]
//   joints:   [[x,y,z], ...]        parents: [-1, 0, ...]
//   weights:  per vertex, a list of [bone, weight] pairs
//   face_colors (optional): [[r,g,b], ...]
RiggedTemplate load_template(const std::filesystem::path &path, double units_scale = 1.0);
void save_template(const std::filesystem::path &path, const RiggedTemplate &rig);

/// Geometry only. Polygons are fan-triangulated; texture and normal indices are ignored.
TemplateMesh load_obj(const std::filesystem::path &path);
void save_obj(const std::filesystem::path &path, const TemplateMesh &mesh);

std::vector<Camera> load_cameras(const std::filesystem::path &path, double units_scale = 1.0);
void save_cameras(const std::filesystem::path &path, const std::vector<Camera> &cameras);
std::vector<PoseFrame> load_poses(const std::filesystem::path &path, double units_scale = 1.0);
void save_poses(const std::filesystem::path &path, const std::vector<PoseFrame> &poses);

struct FrameFiles {
    std::string color;
    std::optional<std::string> normal;
    std::optional<std::string> mask;
};

/// Paths are relative to the manifest's directory.
struct DatasetManifest {
    std::string template_path;
    std::string cameras_path;
    std::string poses_path;
    std::vector<FrameFiles> frames;
    double units_scale = 1.0;
    Vec3 background = Vec3::Zero();
    std::optional<std::string> heldout_manifest;
    std::optional<std::string> gt_mesh;
    std::optional<double> baseline_v2v_mm;
};

DatasetManifest load_manifest(const std::filesystem::path &path);
void save_manifest(const std::filesystem::path &path, const DatasetManifest &manifest);

struct Dataset {
    std::filesystem::path root;
    DatasetManifest manifest;
    RiggedTemplate rig;
    std::vector<TrainFrame> frames;
};

/// Validates counts, file existence and image sizes before decoding any image.
Dataset load_dataset(const std::filesystem::path &manifest_path);

/// Writes `content` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path &path, const std::string &content);
std::string read_file(const std::filesystem::path &path);

} // namespace avatar
