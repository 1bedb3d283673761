#include "test_util.hpp"

#include "avatar/checkpoint.hpp"
#include "avatar/cli.hpp"
#include "avatar/config.hpp"
#include "avatar/formats.hpp"
#include "avatar/image_io.hpp"
#include "avatar/metrics.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace avatar;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("avatar_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RiggedTemplate sphere_rig() {
    RiggedTemplate r;
    r.mesh = icosphere(1, 0.25);
    r.skeleton = Skeleton({-1, 0}, {Vec3(0, -0.25, 0), Vec3(0, 0.05, 0)});
    std::vector<std::vector<SkinInfluence>> rows;
    for (const Vec3 &v : r.mesh.vertices) {
        const double t = std::clamp(0.5 + v.y() / 0.25, 0.0, 1.0);
        rows.push_back({{0, 1.0 - t}, {1, t}});
    }
    r.weights = SkinWeights::from_influences(rows, 2);
    return r;
}

AvatarModel small_model(const RiggedTemplate &r, std::uint64_t seed) {
    ModelOptions o;
    o.grid.levels = 4;
    o.grid.log2_table_size = 10;
    o.grid.hidden_width = 16;
    return AvatarModel::create(r.mesh, r.skeleton, r.weights, o, seed);
}

int cli(const std::vector<std::string> &args, std::string *out_text = nullptr) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    if (out_text) *out_text = out.str() + err.str();
    return code;
}

} // namespace

TEST_SUITE("avatario") {

TEST_CASE("PNG round trips at both bit depths") {
    const fs::path dir = scratch("png");
    ImagePlane img(5, 3, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 7) / 6.0;
    write_png(dir / "a16.png", img, 16);
    const ImagePlane b = read_png(dir / "a16.png", 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(b.data[i] - img.data[i]) <= 0.5 / 65535.0 + 1e-12);
    write_png(dir / "a8.png", img, 8);
    const ImagePlane c = read_png(dir / "a8.png", 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(c.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
    const ImagePlane gray = read_png(dir / "a8.png", 1);
    CHECK(gray.channels == 1);

    ImagePlane n(2, 1, 3);
    n.data = {0, 0, 1, 0.6, -0.8, 0};
    write_normal_png(dir / "n.png", n);
    const ImagePlane m = read_normal_png(dir / "n.png");
    for (std::size_t i = 0; i < n.data.size(); ++i) CHECK(std::abs(m.data[i] - n.data[i]) < 2.0 / 65535.0);
    CHECK_THROWS(read_png(dir / "missing.png", 3));
}

TEST_CASE("template JSON round trip and weight validation") {
    const fs::path dir = scratch("template");
    RiggedTemplate r = sphere_rig();
    save_template(dir / "t.json", r);
    const RiggedTemplate back = load_template(dir / "t.json");
    CHECK(back.mesh.faces == r.mesh.faces);
    for (std::size_t v = 0; v < r.mesh.vertex_count(); ++v) CHECK(back.mesh.vertices[v] == r.mesh.vertices[v]);
    CHECK(back.skeleton.parents() == r.skeleton.parents());
    CHECK(back.weights.rows.size() == r.weights.rows.size());

    nlohmann::json j = nlohmann::json::parse(read_file(dir / "t.json"));
    j["weights"][0] = nlohmann::json::array({nlohmann::json::array({0, 0.9})});
    std::ofstream(dir / "bad.json") << j.dump();
    try {
        load_template(dir / "bad.json");
        FAIL("expected DataError");
    } catch (const DataError &e) {
        CHECK(std::string(e.what()).find("invalid skinning weights") != std::string::npos);
    }
}

TEST_CASE("OBJ round trip with fan triangulation") {
    const fs::path dir = scratch("obj");
    std::ofstream(dir / "quad.obj") << "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 -1//1\n";
    const TemplateMesh q = load_obj(dir / "quad.obj");
    CHECK(q.vertex_count() == 4);
    REQUIRE(q.face_count() == 2);
    CHECK(q.faces[0] == Face{0, 1, 2});
    CHECK(q.faces[1] == Face{0, 2, 3});
    save_obj(dir / "out.obj", q);
    const TemplateMesh r = load_obj(dir / "out.obj");
    CHECK(r.faces == q.faces);
    CHECK(r.vertices == q.vertices);
}

TEST_CASE("checkpoint bytes are stable through save and load") {
    const fs::path dir = scratch("ckpt");
    const RiggedTemplate r = sphere_rig();
    AvatarModel m = small_model(r, 9);
    m.log_scales[3] = Vec2(-2.5, -3.25);
    m.frame_poses = {PoseFrame::identity(2)};
    m.frame_poses[0].translation = Vec3(0.1, 0.2, 0.3);
    CheckpointMeta meta{9, 7, 2, {{"train.epochs", "20"}}};
    save_checkpoint(dir / "a.bin", m, meta);
    const LoadedCheckpoint l = load_checkpoint(dir / "a.bin");
    CHECK(l.meta.epoch == 7);
    CHECK(l.meta.stage == 2);
    CHECK(l.model.log_scales[3] == m.log_scales[3]);
    CHECK(l.model.frame_poses.size() == 1);
    save_checkpoint(dir / "b.bin", l.model, l.meta);
    CHECK(read_file(dir / "a.bin") == read_file(dir / "b.bin"));
    for (const Vec3 &p : {Vec3(0, 0, 0), Vec3(0.1, -0.2, 0.05)}) {
        CHECK(l.model.color.evaluate(p) == m.color.evaluate(p));
        CHECK(l.model.displacement.evaluate(p) == m.displacement.evaluate(p));
    }

    std::string bytes = read_file(dir / "a.bin");
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), DataError);
    bytes[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), DataError);
}

TEST_CASE("surface distance on concentric spheres") {
    const TemplateMesh a = icosphere(4, 1.0), b = icosphere(4, 1.001);
    const double d = metric_v2v(a, b, 20000, 3);
    CHECK(d == doctest::Approx(1.0).epsilon(0.02));
    CHECK(metric_v2v(a, a, 5000, 3) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    CHECK(metric_v2v(b, a, 20000, 3) == doctest::Approx(d).epsilon(1e-12));
    const SurfaceDistance s = surface_distance(a, b, 5000, 1);
    CHECK(s.nc < 1e-3);
}

TEST_CASE("closest point on triangle regions") {
    const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
    CHECK(closest_point_on_triangle(Vec3(0.2, 0.2, 1), a, b, c).isApprox(Vec3(0.2, 0.2, 0)));
    CHECK(closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c).isApprox(a));
    CHECK(closest_point_on_triangle(Vec3(2, 2, 0), a, b, c).isApprox(Vec3(0.5, 0.5, 0)));
    CHECK(closest_point_on_triangle(Vec3(0.5, -3, 0), a, b, c).isApprox(Vec3(0.5, 0, 0)));
}

TEST_CASE("PSNR values") {
    const ImagePlane zero(4, 4, 3, 0.0), tenth(4, 4, 3, 0.1);
    CHECK(psnr(zero, tenth) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(std::isinf(psnr(zero, zero)));
}

TEST_CASE("config parsing and validation") {
    const ConfigMap c = parse_config("# comment\nseed_free = 1\n[train]\nepochs = 3  # trailing\nlambda = \"0.3\"\n");
    CHECK(c.at("train.epochs") == "3");
    CHECK(c.at("train.lambda") == "0.3");
    ConfigMap ok = parse_config("[train]\nepochs = 3\n");
    apply_override(ok, "train.w_normal=0");
    const Settings s = resolve_settings(ok);
    CHECK(s.train.epochs == 3);
    CHECK(s.train.weights.normal == 0.0);
    CHECK_THROWS_AS(resolve_settings(parse_config("[train]\nepoch = 3\n")), DataError);
    CHECK_THROWS_AS(resolve_settings(parse_config("[train]\nepochs = many\n")), DataError);
    CHECK_THROWS_AS(parse_config("[train\n"), DataError);
    ConfigMap m;
    CHECK_THROWS_AS(apply_override(m, "novalue"), DataError);
}

TEST_CASE("command line errors map to exit codes") {
    std::string text;
    CHECK(cli({"train", "--bogus"}, &text) == kExitUsage);
    CHECK(cli({}, &text) == kExitUsage);
    const fs::path dir = scratch("cli");
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(cli({"train", "--manifest", (dir / "broken.json").string(), "--out", (dir / "o").string()}) == kExitData);
}

TEST_CASE("exporting an untrained model reproduces the template") {
    const fs::path dir = scratch("export");
    const RiggedTemplate r = sphere_rig();
    const AvatarModel m = small_model(r, 4);
    save_checkpoint(dir / "m.bin", m, CheckpointMeta{4, 0, 0, {}});
    REQUIRE(cli({"export", "--checkpoint", (dir / "m.bin").string(), "--out", (dir / "e.json").string(), "--obj",
                 (dir / "e.obj").string()}) == kExitOk);
    const RiggedTemplate e = load_template(dir / "e.json");
    CHECK(e.mesh.faces == r.mesh.faces);
    for (std::size_t v = 0; v < r.mesh.vertex_count(); ++v) CHECK(e.mesh.vertices[v] == r.mesh.vertices[v]);
    CHECK(e.face_colors.size() == r.mesh.face_count());
    for (const Vec3 &c : e.face_colors) CHECK(c.isApprox(Vec3::Constant(0.5)));

    std::string report;
    CHECK(cli({"eval", "--mesh-a", (dir / "e.obj").string(), "--mesh-b", (dir / "e.obj").string()}, &report) == kExitOk);
    CHECK(report.find("v2v_mm") != std::string::npos);
}

}
