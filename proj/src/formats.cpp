#include "avatar/formats.hpp"

#include "avatar/image_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace avatar {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_json_file(const fs::path &path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        throw DataError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
}

const json &field(const json &obj, const char *name, const std::string &where) {
    if (!obj.is_object() || !obj.contains(name)) throw DataError(where + ": missing field '" + name + "'");
    return obj.at(name);
}

double number(const json &v, const std::string &where) {
    if (!v.is_number()) throw DataError(where + ": expected a number");
    return v.get<double>();
}

int integer(const json &v, const std::string &where) {
    if (!v.is_number_integer()) throw DataError(where + ": expected an integer");
    return v.get<int>();
}

Vec3 vec3(const json &v, const std::string &where) {
    if (!v.is_array() || v.size() != 3) throw DataError(where + ": expected a 3-element array");
    return {number(v[0], where), number(v[1], where), number(v[2], where)};
}

const json &array_field(const json &obj, const char *name, const std::string &where) {
    const json &a = field(obj, name, where);
    if (!a.is_array()) throw DataError(where + ": field '" + name + "' must be an array");
    return a;
}

std::vector<Vec3> vec3_list(const json &obj, const char *name, const std::string &where, double scale = 1.0) {
    const json &a = array_field(obj, name, where);
    std::vector<Vec3> out;
    out.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        out.push_back(scale * vec3(a[i], where + ": " + name + "[" + std::to_string(i) + "]"));
    return out;
}

json to_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }

json mat4_json(const Mat4 &m) {
    json rows = json::array();
    for (int r = 0; r < 4; ++r) rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2), m(r, 3)}));
    return rows;
}

} // namespace

std::string read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path &path, const std::string &content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw DataError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

RiggedTemplate load_template(const fs::path &path, double units_scale) {
    const json doc = parse_json_file(path);
    const std::string where = path.string();
    RiggedTemplate rig;
    rig.mesh.vertices = vec3_list(doc, "vertices", where, units_scale);
    const json &faces = array_field(doc, "faces", where);
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const std::string w = where + ": faces[" + std::to_string(f) + "]";
        if (!faces[f].is_array() || faces[f].size() != 3) throw DataError(w + ": expected 3 indices");
        rig.mesh.faces.push_back({integer(faces[f][0], w), integer(faces[f][1], w), integer(faces[f][2], w)});
    }
    rig.mesh.validate();

    std::vector<Vec3> joints = vec3_list(doc, "joints", where, units_scale);
    std::vector<int> parents;
    for (const json &p : array_field(doc, "parents", where)) parents.push_back(integer(p, where + ": parents"));
    rig.skeleton = Skeleton(std::move(parents), std::move(joints));

    const json &weights = array_field(doc, "weights", where);
    if (weights.size() != rig.mesh.vertex_count())
        throw DataError(where + ": field 'weights' has " + std::to_string(weights.size()) + " rows for " +
                        std::to_string(rig.mesh.vertex_count()) + " vertices");
    std::vector<std::vector<SkinInfluence>> rows(weights.size());
    for (std::size_t v = 0; v < weights.size(); ++v) {
        const std::string w = where + ": weights[" + std::to_string(v) + "]";
        if (!weights[v].is_array()) throw DataError(w + ": expected a list of [bone, weight] pairs");
        for (const json &pair : weights[v]) {
            if (!pair.is_array() || pair.size() != 2) throw DataError(w + ": expected [bone, weight]");
            rows[v].push_back({integer(pair[0], w), number(pair[1], w)});
        }
    }
    rig.weights = SkinWeights::from_influences(rows, rig.skeleton.joint_count());

    if (doc.contains("face_colors")) {
        rig.face_colors = vec3_list(doc, "face_colors", where);
        if (rig.face_colors.size() != rig.mesh.face_count())
            throw DataError(where + ": field 'face_colors' length differs from face count");
    }
    return rig;
}

void save_template(const fs::path &path, const RiggedTemplate &rig) {
    json doc;
    json verts = json::array(), faces = json::array(), joints = json::array(), weights = json::array();
    for (const Vec3 &v : rig.mesh.vertices) verts.push_back(to_json(v));
    for (const Face &f : rig.mesh.faces) faces.push_back(json::array({f[0], f[1], f[2]}));
    for (const Vec3 &j : rig.skeleton.rest_joints) joints.push_back(to_json(j));
    for (const auto &row : rig.weights.rows) {
        json r = json::array();
        for (const SkinInfluence &inf : row) r.push_back(json::array({inf.bone, inf.weight}));
        weights.push_back(std::move(r));
    }
    doc["vertices"] = std::move(verts);
    doc["faces"] = std::move(faces);
    doc["joints"] = std::move(joints);
    doc["parents"] = rig.skeleton.parents();
    doc["weights"] = std::move(weights);
    if (!rig.face_colors.empty()) {
        json colors = json::array();
        for (const Vec3 &c : rig.face_colors) colors.push_back(to_json(c));
        doc["face_colors"] = std::move(colors);
    }
    write_file_atomic(path, doc.dump() + "\n");
}

TemplateMesh load_obj(const fs::path &path) {
    std::istringstream in(read_file(path));
    TemplateMesh mesh;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x() >> v.y() >> v.z()))
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed vertex");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) {
                int i = 0;
                try {
                    i = std::stoi(tok.substr(0, tok.find('/')));
                } catch (const std::exception &) {
                    throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed face index");
                }
                idx.push_back(i < 0 ? static_cast<int>(mesh.vertices.size()) + i : i - 1);
            }
            if (idx.size() < 3) throw DataError(path.string() + ":" + std::to_string(lineno) + ": face has < 3 vertices");
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
        }
    }
    mesh.validate();
    return mesh;
}

void save_obj(const fs::path &path, const TemplateMesh &mesh) {
    std::ostringstream out;
    out.precision(17);
    for (const Vec3 &v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const Face &f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    write_file_atomic(path, out.str());
}

std::vector<Camera> load_cameras(const fs::path &path, double units_scale) {
    const json doc = parse_json_file(path);
    if (!doc.is_array()) throw DataError(path.string() + ": expected an array of cameras");
    std::vector<Camera> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const std::string w = path.string() + ": cameras[" + std::to_string(i) + "]";
        const json &c = doc[i];
        Camera cam;
        cam.width = integer(field(c, "width", w), w);
        cam.height = integer(field(c, "height", w), w);
        cam.fx = number(field(c, "fx", w), w);
        cam.fy = number(field(c, "fy", w), w);
        cam.cx = number(field(c, "cx", w), w);
        cam.cy = number(field(c, "cy", w), w);
        if (c.contains("near")) cam.near_plane = number(c["near"], w);
        const json &m = field(c, "world_to_camera", w);
        if (!m.is_array() || m.size() != 4) throw DataError(w + ": world_to_camera must be 4x4");
        for (int r = 0; r < 4; ++r) {
            if (!m[r].is_array() || m[r].size() != 4) throw DataError(w + ": world_to_camera must be 4x4");
            for (int k = 0; k < 4; ++k) cam.world_to_camera(r, k) = number(m[r][k], w);
        }
        cam.world_to_camera.block<3, 1>(0, 3) *= units_scale;
        cam.validate();
        out.push_back(cam);
    }
    return out;
}

void save_cameras(const fs::path &path, const std::vector<Camera> &cameras) {
    json doc = json::array();
    for (const Camera &c : cameras)
        doc.push_back({{"width", c.width}, {"height", c.height}, {"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx},
                       {"cy", c.cy}, {"near", c.near_plane}, {"world_to_camera", mat4_json(c.world_to_camera)}});
    write_file_atomic(path, doc.dump(1) + "\n");
}

std::vector<PoseFrame> load_poses(const fs::path &path, double units_scale) {
    const json doc = parse_json_file(path);
    if (!doc.is_array()) throw DataError(path.string() + ": expected an array of poses");
    std::vector<PoseFrame> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const std::string w = path.string() + ": poses[" + std::to_string(i) + "]";
        PoseFrame p;
        p.joint_rotations = vec3_list(doc[i], "joint_rotations", w);
        p.translation = units_scale * vec3(field(doc[i], "translation", w), w + ": translation");
        out.push_back(std::move(p));
    }
    return out;
}

void save_poses(const fs::path &path, const std::vector<PoseFrame> &poses) {
    json doc = json::array();
    for (const PoseFrame &p : poses) {
        json rot = json::array();
        for (const Vec3 &r : p.joint_rotations) rot.push_back(to_json(r));
        doc.push_back({{"joint_rotations", rot}, {"translation", to_json(p.translation)}});
    }
    write_file_atomic(path, doc.dump(1) + "\n");
}

DatasetManifest load_manifest(const fs::path &path) {
    const json doc = parse_json_file(path);
    const std::string w = path.string();
    auto str = [&](const json &obj, const char *name, const std::string &where) {
        const json &v = field(obj, name, where);
        if (!v.is_string()) throw DataError(where + ": field '" + name + "' must be a string");
        return v.get<std::string>();
    };
    auto opt_str = [&](const json &obj, const char *name, const std::string &where) -> std::optional<std::string> {
        if (!obj.contains(name) || obj[name].is_null()) return std::nullopt;
        return str(obj, name, where);
    };
    DatasetManifest m;
    m.template_path = str(doc, "template", w);
    m.cameras_path = str(doc, "cameras", w);
    m.poses_path = str(doc, "poses", w);
    if (doc.contains("units_scale")) m.units_scale = number(doc["units_scale"], w + ": units_scale");
    if (!(m.units_scale > 0.0)) throw DataError(w + ": units_scale must be positive");
    if (doc.contains("background")) m.background = vec3(doc["background"], w + ": background");
    m.heldout_manifest = opt_str(doc, "heldout", w);
    m.gt_mesh = opt_str(doc, "gt_mesh", w);
    if (doc.contains("baseline_v2v_mm") && !doc["baseline_v2v_mm"].is_null())
        m.baseline_v2v_mm = number(doc["baseline_v2v_mm"], w + ": baseline_v2v_mm");
    const json &frames = array_field(doc, "frames", w);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::string fw = w + ": frames[" + std::to_string(i) + "]";
        m.frames.push_back({str(frames[i], "color", fw), opt_str(frames[i], "normal", fw), opt_str(frames[i], "mask", fw)});
    }
    return m;
}

void save_manifest(const fs::path &path, const DatasetManifest &m) {
    json doc;
    doc["template"] = m.template_path;
    doc["cameras"] = m.cameras_path;
    doc["poses"] = m.poses_path;
    doc["units_scale"] = m.units_scale;
    doc["background"] = to_json(m.background);
    if (m.heldout_manifest) doc["heldout"] = *m.heldout_manifest;
    if (m.gt_mesh) doc["gt_mesh"] = *m.gt_mesh;
    if (m.baseline_v2v_mm) doc["baseline_v2v_mm"] = *m.baseline_v2v_mm;
    json frames = json::array();
    for (const FrameFiles &f : m.frames) {
        json j = {{"color", f.color}};
        if (f.normal) j["normal"] = *f.normal;
        if (f.mask) j["mask"] = *f.mask;
        frames.push_back(std::move(j));
    }
    doc["frames"] = std::move(frames);
    write_file_atomic(path, doc.dump(1) + "\n");
}

Dataset load_dataset(const fs::path &manifest_path) {
    Dataset ds;
    ds.root = manifest_path.parent_path();
    ds.manifest = load_manifest(manifest_path);
    const DatasetManifest &m = ds.manifest;
    auto resolve = [&](const std::string &rel) {
        const fs::path p = ds.root / rel;
        if (!fs::exists(p)) throw DataError("referenced file does not exist: " + p.string());
        return p;
    };
    if (m.frames.empty()) throw DataError(manifest_path.string() + ": manifest lists no frames");
    for (const FrameFiles &f : m.frames) {
        resolve(f.color);
        if (f.normal) resolve(*f.normal);
        if (f.mask) resolve(*f.mask);
    }
    ds.rig = load_template(resolve(m.template_path), m.units_scale);
    const std::vector<Camera> cams = load_cameras(resolve(m.cameras_path), m.units_scale);
    const std::vector<PoseFrame> poses = load_poses(resolve(m.poses_path), m.units_scale);
    if (cams.size() != m.frames.size() || poses.size() != m.frames.size())
        throw DataError(manifest_path.string() + ": frame counts disagree (" + std::to_string(m.frames.size()) +
                        " frames, " + std::to_string(cams.size()) + " cameras, " + std::to_string(poses.size()) +
                        " poses)");
    for (const PoseFrame &p : poses)
        if (p.joint_rotations.size() != ds.rig.skeleton.joint_count())
            throw DataError(manifest_path.string() + ": pose joint count differs from the template skeleton");

    for (std::size_t i = 0; i < m.frames.size(); ++i) {
        TrainFrame fr;
        fr.camera = cams[i];
        fr.pose = poses[i];
        fr.color = read_png(ds.root / m.frames[i].color, 3);
        if (m.frames[i].normal) fr.normal = read_normal_png(ds.root / *m.frames[i].normal);
        if (m.frames[i].mask) fr.mask = read_png(ds.root / *m.frames[i].mask, 1);
        auto check = [&](const ImagePlane &img, const char *what) {
            if (img.width != fr.camera.width || img.height != fr.camera.height)
                throw DataError("frame " + std::to_string(i) + ": " + what + " image size differs from its camera");
        };
        check(fr.color, "color");
        if (fr.normal) check(*fr.normal, "normal");
        if (fr.mask) check(*fr.mask, "mask");
        ds.frames.push_back(std::move(fr));
    }
    return ds;
}

} // namespace avatar
