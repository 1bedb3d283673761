#include "avatar/checkpoint.hpp"

#include "avatar/formats.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>

namespace avatar {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'V', 'C', 'K', 'P', 'T', '\r', '\n'};

template <typename T> void put_le(std::string &out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.append(reinterpret_cast<const char *>(bytes), sizeof(T));
}

template <typename T> T get_le(const std::string &in, std::size_t &pos) {
    if (pos + sizeof(T) > in.size()) throw DataError("checkpoint truncated");
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

struct ArrayWriter {
    json manifest = json::array();
    std::string payload;

    void add(const std::string &name, std::vector<std::size_t> shape, const std::vector<double> &values) {
        manifest.push_back({{"name", name}, {"shape", shape}, {"count", values.size()}});
        for (double v : values) put_le(payload, v);
    }
};

std::vector<double> flatten(const std::vector<Vec3> &v) {
    std::vector<double> out;
    out.reserve(v.size() * 3);
    for (const Vec3 &x : v) out.insert(out.end(), x.data(), x.data() + 3);
    return out;
}

std::vector<double> flatten(const std::vector<Vec2> &v) {
    std::vector<double> out;
    out.reserve(v.size() * 2);
    for (const Vec2 &x : v) out.insert(out.end(), x.data(), x.data() + 2);
    return out;
}

json grid_json(const HashGridConfig &g) {
    return {{"levels", g.levels},
            {"log2_table_size", g.log2_table_size},
            {"features_per_entry", g.features_per_entry},
            {"base_resolution", g.base_resolution},
            {"growth", g.growth},
            {"hidden_width", g.hidden_width},
            {"hidden_layers", g.hidden_layers},
            {"aabb_min", {g.aabb_min.x(), g.aabb_min.y(), g.aabb_min.z()}},
            {"aabb_max", {g.aabb_max.x(), g.aabb_max.y(), g.aabb_max.z()}}};
}

HashGridConfig grid_from_json(const json &j) {
    HashGridConfig g;
    g.levels = j.at("levels").get<int>();
    g.log2_table_size = j.at("log2_table_size").get<int>();
    g.features_per_entry = j.at("features_per_entry").get<int>();
    g.base_resolution = j.at("base_resolution").get<int>();
    g.growth = j.at("growth").get<double>();
    g.hidden_width = j.at("hidden_width").get<int>();
    g.hidden_layers = j.at("hidden_layers").get<int>();
    for (int k = 0; k < 3; ++k) {
        g.aabb_min[k] = j.at("aabb_min").at(k).get<double>();
        g.aabb_max[k] = j.at("aabb_max").at(k).get<double>();
    }
    return g;
}

} // namespace

std::string serialize_checkpoint(const AvatarModel &model, const CheckpointMeta &meta) {
    const std::size_t nv = model.mesh.vertex_count(), nf = model.mesh.face_count(), nj = model.skeleton.joint_count();
    ArrayWriter w;
    w.add("vertices", {nv, 3}, flatten(model.mesh.vertices));
    std::vector<double> faces;
    faces.reserve(nf * 3);
    for (const Face &f : model.mesh.faces) faces.insert(faces.end(), {double(f[0]), double(f[1]), double(f[2])});
    w.add("faces", {nf, 3}, faces);
    std::vector<double> parents(model.skeleton.parents().begin(), model.skeleton.parents().end());
    w.add("parents", {nj}, parents);
    w.add("rest_joints", {nj, 3}, flatten(model.skeleton.rest_joints));
    std::vector<double> bones(nv * kMaxInfluences, -1.0), weights(nv * kMaxInfluences, 0.0);
    for (std::size_t v = 0; v < nv; ++v)
        for (std::size_t k = 0; k < model.weights.rows[v].size(); ++k) {
            bones[v * kMaxInfluences + k] = model.weights.rows[v][k].bone;
            weights[v * kMaxInfluences + k] = model.weights.rows[v][k].weight;
        }
    w.add("skin_bones", {nv, std::size_t(kMaxInfluences)}, bones);
    w.add("skin_weights", {nv, std::size_t(kMaxInfluences)}, weights);
    w.add("log_scales", {nf, 2}, flatten(model.log_scales));
    w.add("rot2d", {nf, 2}, flatten(model.rot2d));
    w.add("displacement_field", {model.displacement.params().size()},
          {model.displacement.params().begin(), model.displacement.params().end()});
    w.add("color_field", {model.color.params().size()}, {model.color.params().begin(), model.color.params().end()});
    std::vector<double> poses;
    for (const PoseFrame &p : model.frame_poses) {
        for (const Vec3 &r : p.joint_rotations) poses.insert(poses.end(), r.data(), r.data() + 3);
        poses.insert(poses.end(), p.translation.data(), p.translation.data() + 3);
    }
    w.add("frame_poses", {model.frame_poses.size(), nj * 3 + 3}, poses);

    json header;
    header["format"] = "avatar-checkpoint";
    header["version"] = kCheckpointVersion;
    header["seed"] = meta.seed;
    header["epoch"] = meta.epoch;
    header["stage"] = meta.stage;
    header["config"] = meta.config;
    header["epsilon"] = model.epsilon;
    header["hash_grid"] = grid_json(model.displacement.config());
    header["arrays"] = w.manifest;
    const std::string header_text = header.dump();

    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, header_text.size());
    out += header_text;
    out += w.payload;
    return out;
}

LoadedCheckpoint deserialize_checkpoint(const std::string &bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a checkpoint file");
    std::size_t pos = sizeof(kMagic);
    const auto version = get_le<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    const auto header_len = get_le<std::uint64_t>(bytes, pos);
    if (pos + header_len > bytes.size()) throw DataError("checkpoint truncated");
    json header;
    try {
        header = json::parse(bytes.substr(pos, header_len));
    } catch (const json::parse_error &e) {
        throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    pos += header_len;

    std::map<std::string, std::vector<double>> arrays;
    try {
        for (const json &a : header.at("arrays")) {
            const auto count = a.at("count").get<std::size_t>();
            if (pos + count * sizeof(double) > bytes.size()) throw DataError("checkpoint truncated");
            std::vector<double> values(count);
            for (double &v : values) v = get_le<double>(bytes, pos);
            arrays[a.at("name").get<std::string>()] = std::move(values);
        }
    } catch (const json::exception &e) {
        throw DataError(std::string("checkpoint header malformed: ") + e.what());
    }
    auto need = [&](const char *name) -> const std::vector<double> & {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw DataError(std::string("checkpoint lacks array '") + name + "'");
        return it->second;
    };
    auto vec3s = [](const std::vector<double> &flat) {
        std::vector<Vec3> out(flat.size() / 3);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = Vec3(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
        return out;
    };

    LoadedCheckpoint ck;
    AvatarModel &m = ck.model;
    try {
        m.mesh.vertices = vec3s(need("vertices"));
        const auto &faces = need("faces");
        for (std::size_t i = 0; i + 2 < faces.size(); i += 3)
            m.mesh.faces.push_back({int(faces[i]), int(faces[i + 1]), int(faces[i + 2])});
        m.mesh.validate();
        std::vector<int> parents;
        for (double p : need("parents")) parents.push_back(int(p));
        m.skeleton = Skeleton(std::move(parents), vec3s(need("rest_joints")));

        const auto &bones = need("skin_bones");
        const auto &weights = need("skin_weights");
        m.weights.rows.assign(m.mesh.vertex_count(), {});
        if (bones.size() != m.mesh.vertex_count() * kMaxInfluences || weights.size() != bones.size())
            throw DataError("checkpoint skin arrays have the wrong size");
        for (std::size_t v = 0; v < m.mesh.vertex_count(); ++v)
            for (int k = 0; k < kMaxInfluences; ++k)
                if (bones[v * kMaxInfluences + k] >= 0.0)
                    m.weights.rows[v].push_back({int(bones[v * kMaxInfluences + k]), weights[v * kMaxInfluences + k]});

        const auto &ls = need("log_scales");
        const auto &rot = need("rot2d");
        if (ls.size() != m.mesh.face_count() * 2 || rot.size() != ls.size())
            throw DataError("checkpoint per-face arrays have the wrong size");
        for (std::size_t f = 0; f < m.mesh.face_count(); ++f) {
            m.log_scales.emplace_back(ls[2 * f], ls[2 * f + 1]);
            m.rot2d.emplace_back(rot[2 * f], rot[2 * f + 1]);
        }
        m.epsilon = header.at("epsilon").get<double>();
        const HashGridConfig grid = grid_from_json(header.at("hash_grid"));
        const auto seed = header.at("seed").get<std::uint64_t>();
        m.displacement = HashField(grid, HashField::Activation::None, seed);
        m.color = HashField(grid, HashField::Activation::Sigmoid, seed + 1);
        const auto &dp = need("displacement_field");
        const auto &cp = need("color_field");
        if (dp.size() != m.displacement.params().size() || cp.size() != m.color.params().size())
            throw DataError("checkpoint field arrays do not match the hash grid configuration");
        std::copy(dp.begin(), dp.end(), m.displacement.params().begin());
        std::copy(cp.begin(), cp.end(), m.color.params().begin());

        const auto &poses = need("frame_poses");
        const std::size_t stride = m.skeleton.joint_count() * 3 + 3;
        if (poses.size() % stride != 0) throw DataError("checkpoint frame_poses has the wrong size");
        for (std::size_t i = 0; i < poses.size(); i += stride) {
            PoseFrame p = PoseFrame::identity(m.skeleton.joint_count());
            for (std::size_t j = 0; j < m.skeleton.joint_count(); ++j)
                p.joint_rotations[j] = Vec3(poses[i + 3 * j], poses[i + 3 * j + 1], poses[i + 3 * j + 2]);
            p.translation = Vec3(poses[i + stride - 3], poses[i + stride - 2], poses[i + stride - 1]);
            m.frame_poses.push_back(std::move(p));
        }

        ck.meta.seed = seed;
        ck.meta.epoch = header.at("epoch").get<int>();
        ck.meta.stage = header.at("stage").get<int>();
        ck.meta.config = header.at("config").get<std::map<std::string, std::string>>();
    } catch (const json::exception &e) {
        throw DataError(std::string("checkpoint header malformed: ") + e.what());
    }
    m.refresh_derived();
    return ck;
}

void save_checkpoint(const std::filesystem::path &path, const AvatarModel &model, const CheckpointMeta &meta) {
    write_file_atomic(path, serialize_checkpoint(model, meta));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path &path) { return deserialize_checkpoint(read_file(path)); }

} // namespace avatar
