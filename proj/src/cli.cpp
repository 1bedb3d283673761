#include "avatar/cli.hpp"

#include "avatar/checkpoint.hpp"
#include "avatar/config.hpp"
#include "avatar/formats.hpp"
#include "avatar/image_io.hpp"
#include "avatar/losses.hpp"
#include "avatar/metrics.hpp"
#include "avatar/parallel.hpp"
#include "avatar/synth.hpp"
#include "avatar/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace avatar {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string config_path;
    std::vector<std::string> overrides;
};

Settings load_settings(const GlobalOptions &g) {
    ConfigMap cfg;
    if (!g.config_path.empty()) cfg = load_config(g.config_path);
    for (const std::string &o : g.overrides) apply_override(cfg, o);
    return resolve_settings(cfg);
}

std::string numbered(const char *prefix, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03zu.png", prefix, i);
    return buf;
}

std::string csv_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_loss_csv(const fs::path &path, const std::vector<IterationLog> &log) {
    std::string s = "epoch,iter,l_rgb,l_normal,l_nc,total\n";
    for (const IterationLog &l : log)
        s += std::to_string(l.epoch) + "," + std::to_string(l.iter) + "," + csv_number(l.rgb) + "," +
             csv_number(l.normal) + "," + csv_number(l.nc) + "," + csv_number(l.total) + "\n";
    write_file_atomic(path, s);
}

TemplateMesh load_any_mesh(const fs::path &path) {
    if (path.extension() == ".obj") return load_obj(path);
    return load_template(path).mesh;
}

TemplateMesh canonical_mesh(const AvatarModel &model) {
    TemplateMesh m = model.mesh;
    m.vertices = model.canonical_vertices();
    return m;
}

void render_sequence(AvatarModel &model, const std::vector<Camera> &cams, const std::vector<PoseFrame> &poses,
                     const Vec3 &background, const fs::path &out_dir, const char *color_prefix,
                     const char *normal_prefix) {
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const FrameState st = forward_frame(model, poses[i], cams[i], background);
        write_png(out_dir / numbered(color_prefix, i), st.color_image, 8);
        write_normal_png(out_dir / numbered(normal_prefix, i), st.normal_image);
    }
}

int cmd_synth(const GlobalOptions &g, const std::string &out_dir, std::ostream &out) {
    Settings s = load_settings(g);
    s.synth.seed = g.seed;
    const SynthResult r = synth_scene(s.synth, out_dir);
    out << "wrote " << r.manifest.frames.size() << " views to " << out_dir << "; template faces "
        << make_capsule(s.synth.segments, s.synth.rings, s.synth.radius, s.synth.half_length).face_count()
        << ", baseline v2v " << r.baseline_v2v_mm << " mm\n";
    return kExitOk;
}

int cmd_train(const GlobalOptions &g, const std::string &manifest, const std::string &out_dir, std::ostream &out,
              std::ostream &err) {
    const Settings s = load_settings(g);
    const Dataset ds = load_dataset(manifest);
    fs::create_directories(out_dir);
    AvatarModel model = AvatarModel::create(ds.rig.mesh, ds.rig.skeleton, ds.rig.weights, s.model, g.seed);
    TrainConfig tc = s.train;
    tc.background = ds.manifest.background;
    Trainer trainer(model, tc);

    CheckpointMeta meta;
    meta.seed = g.seed;
    meta.config = echo_settings(s);
    std::vector<IterationLog> log;
    AvatarModel last_good = model;
    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        EpochStats stats;
        try {
            stats = trainer.train_epoch(ds.frames, epoch, &log);
        } catch (const DivergenceError &e) {
            save_checkpoint(fs::path(out_dir) / "checkpoint.bin", last_good, meta);
            write_loss_csv(fs::path(out_dir) / "loss.csv", log);
            err << "diverged in epoch " << epoch << ": " << e.what() << "; saved epoch " << meta.epoch << " state\n";
            return kExitDiverged;
        }
        meta.epoch = epoch;
        meta.stage = stats.stage;
        out << "epoch " << epoch << " stage " << stats.stage << " rgb " << stats.rgb << " normal " << stats.normal
            << " nc " << stats.nc << " total " << stats.total << "\n";
        if (epoch < tc.epochs) last_good = model;
    }
    save_checkpoint(fs::path(out_dir) / "checkpoint.bin", model, meta);
    write_loss_csv(fs::path(out_dir) / "loss.csv", log);
    return kExitOk;
}

int cmd_render(const std::string &checkpoint, const std::string &cameras, const std::string &poses,
               const std::string &out_dir, const std::vector<double> &background) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    std::vector<Camera> cams = load_cameras(cameras);
    std::vector<PoseFrame> ps = load_poses(poses);
    if (ps.size() == 1 && cams.size() > 1) ps.assign(cams.size(), ps.front());
    if (cams.size() == 1 && ps.size() > 1) cams.assign(ps.size(), cams.front());
    if (cams.size() != ps.size()) throw DataError("render: camera and pose counts differ");
    render_sequence(ck.model, cams, ps, Vec3(background[0], background[1], background[2]), out_dir, "color", "normal");
    return kExitOk;
}

int cmd_animate(const std::string &checkpoint, const std::string &cameras, int camera_index, const std::string &poses,
                const std::string &out_dir, const std::vector<double> &background) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    const std::vector<Camera> all = load_cameras(cameras);
    if (camera_index < 0 || static_cast<std::size_t>(camera_index) >= all.size())
        throw DataError("animate: camera index out of range");
    const std::vector<PoseFrame> ps = load_poses(poses);
    const std::vector<Camera> cams(ps.size(), all[camera_index]);
    render_sequence(ck.model, cams, ps, Vec3(background[0], background[1], background[2]), out_dir, "color", "normal");
    return kExitOk;
}

int cmd_export(const std::string &checkpoint, const std::string &out_path, const std::string &obj_path) {
    const LoadedCheckpoint ck = load_checkpoint(checkpoint);
    RiggedTemplate rig;
    rig.mesh = canonical_mesh(ck.model);
    rig.skeleton = ck.model.skeleton;
    rig.weights = ck.model.weights;
    rig.face_colors = ck.model.face_colors();
    save_template(out_path, rig);
    if (!obj_path.empty()) save_obj(obj_path, rig.mesh);
    return kExitOk;
}

int cmd_eval(const GlobalOptions &g, const std::string &checkpoint, const std::string &manifest,
             const std::string &mesh_a, const std::string &mesh_b, const std::string &out_path, std::ostream &out) {
    const Settings s = load_settings(g);
    MetricsReport report;
    if (!mesh_a.empty() || !mesh_b.empty()) {
        if (mesh_a.empty() || mesh_b.empty()) throw DataError("eval: --mesh-a and --mesh-b go together");
        const SurfaceDistance d = surface_distance(load_any_mesh(mesh_a), load_any_mesh(mesh_b), s.eval_samples, g.seed);
        report.v2v_mm = d.v2v_mm;
        report.nc = d.nc;
    } else {
        if (checkpoint.empty() || manifest.empty()) throw DataError("eval: needs --checkpoint and --manifest, or two meshes");
        LoadedCheckpoint ck = load_checkpoint(checkpoint);
        const DatasetManifest top = load_manifest(manifest);
        const fs::path root = fs::path(manifest).parent_path();
        const fs::path image_manifest = top.heldout_manifest ? root / *top.heldout_manifest : fs::path(manifest);
        const Dataset ds = load_dataset(image_manifest);
        double psnr_sum = 0.0, ssim_sum = 0.0;
        bool infinite = false;
        for (const TrainFrame &f : ds.frames) {
            const FrameState st = forward_frame(ck.model, f.pose, f.camera, ds.manifest.background);
            const ImageMetrics m = metric_images(st.color_image, f.color);
            if (std::isinf(m.psnr)) infinite = true;
            else psnr_sum += m.psnr;
            ssim_sum += m.ssim;
        }
        const double n = static_cast<double>(ds.frames.size());
        report.views = static_cast<int>(ds.frames.size());
        report.psnr = infinite ? kPsnrIdentical : psnr_sum / n;
        report.ssim = ssim_sum / n;
        if (top.gt_mesh) {
            const SurfaceDistance d =
                surface_distance(canonical_mesh(ck.model), load_any_mesh(root / *top.gt_mesh), s.eval_samples, g.seed);
            report.v2v_mm = d.v2v_mm;
            report.nc = d.nc;
        }
        report.baseline_v2v_mm = top.baseline_v2v_mm;
    }
    const std::string text = report.to_json();
    if (out_path.empty()) out << text;
    else write_file_atomic(out_path, text);
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Mesh-bound Gaussian splat avatars: synthesize, train, render, export, evaluate"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--seed", g.seed, "Seed for every random draw")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads for rendering and losses")->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--config", g.config_path, "key = value settings file")->check(CLI::ExistingFile);
    app.add_option("--set", g.overrides, "Override one setting, e.g. --set train.w_normal=0");

    std::string out_dir, manifest, checkpoint, cameras, poses, obj, mesh_a, mesh_b;
    std::vector<double> background{0.0, 0.0, 0.0};
    int camera_index = 0;

    CLI::App *synth = app.add_subcommand("synth", "Generate the synthetic capsule dataset");
    synth->add_option("--out", out_dir, "Output directory")->required();

    CLI::App *train = app.add_subcommand("train", "Fit an avatar to a dataset");
    train->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out_dir, "Directory for checkpoint.bin and loss.csv")->required();

    CLI::App *render = app.add_subcommand("render", "Render color and normal PNGs");
    render->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    render->add_option("--cameras", cameras)->required()->check(CLI::ExistingFile);
    render->add_option("--poses", poses)->required()->check(CLI::ExistingFile);
    render->add_option("--out", out_dir)->required();
    render->add_option("--background", background)->expected(3);

    CLI::App *animate = app.add_subcommand("animate", "Render a pose sequence from one camera");
    animate->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    animate->add_option("--cameras", cameras)->required()->check(CLI::ExistingFile);
    animate->add_option("--camera-index", camera_index)->capture_default_str();
    animate->add_option("--poses", poses)->required()->check(CLI::ExistingFile);
    animate->add_option("--out", out_dir)->required();
    animate->add_option("--background", background)->expected(3);

    CLI::App *exp = app.add_subcommand("export", "Write the colored, rigged canonical mesh");
    exp->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    exp->add_option("--out", out_dir, "Template JSON path")->required();
    exp->add_option("--obj", obj, "Also write geometry as OBJ");

    CLI::App *eval = app.add_subcommand("eval", "Compute image and surface metrics");
    eval->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
    eval->add_option("--manifest", manifest)->check(CLI::ExistingFile);
    eval->add_option("--mesh-a", mesh_a)->check(CLI::ExistingFile);
    eval->add_option("--mesh-b", mesh_b)->check(CLI::ExistingFile);
    eval->add_option("--out", out_dir, "Report path (stdout when omitted)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError &e) {
        err << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    try {
        set_thread_count(g.threads);
        if (synth->parsed()) return cmd_synth(g, out_dir, out);
        if (train->parsed()) return cmd_train(g, manifest, out_dir, out, err);
        if (render->parsed()) return cmd_render(checkpoint, cameras, poses, out_dir, background);
        if (animate->parsed()) return cmd_animate(checkpoint, cameras, camera_index, poses, out_dir, background);
        if (exp->parsed()) return cmd_export(checkpoint, out_dir, obj);
        if (eval->parsed()) return cmd_eval(g, checkpoint, manifest, mesh_a, mesh_b, out_dir, out);
    } catch (const DivergenceError &e) {
        err << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const DataError &e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

} // namespace avatar
