#include "avatar/config.hpp"

#include "avatar/formats.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

namespace avatar {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string &v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    return v;
}

double parse_double(const std::string &key, const std::string &v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw DataError("config: '" + key + "' is not a number: " + v);
    return out;
}

long long parse_int(const std::string &key, const std::string &v) {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw DataError("config: '" + key + "' is not an integer: " + v);
    return out;
}

bool parse_bool(const std::string &key, const std::string &v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw DataError("config: '" + key + "' is not a boolean: " + v);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// One binding per recognised key: a reader and a writer over Settings.
struct Binding {
    std::function<void(Settings &, const std::string &, const std::string &)> set;
    std::function<std::string(const Settings &)> get;
};

template <typename T> Binding bind_double(T Settings::*group, double T::*member) {
    return {[=](Settings &s, const std::string &k, const std::string &v) { (s.*group).*member = parse_double(k, v); },
            [=](const Settings &s) { return fmt((s.*group).*member); }};
}

template <typename T> Binding bind_int(T Settings::*group, int T::*member) {
    return {[=](Settings &s, const std::string &k, const std::string &v) {
                (s.*group).*member = static_cast<int>(parse_int(k, v));
            },
            [=](const Settings &s) { return std::to_string((s.*group).*member); }};
}

template <typename T> Binding bind_bool(T Settings::*group, bool T::*member) {
    return {[=](Settings &s, const std::string &k, const std::string &v) { (s.*group).*member = parse_bool(k, v); },
            [=](const Settings &s) { return std::string((s.*group).*member ? "true" : "false"); }};
}

const std::map<std::string, Binding> &bindings() {
    static const std::map<std::string, Binding> table = [] {
        std::map<std::string, Binding> b;
        using S = Settings;
        b["train.epochs"] = {[](S &s, const std::string &k, const std::string &v) {
                                 s.train.epochs = static_cast<int>(parse_int(k, v));
                                 s.train.schedule.max_epoch = std::max(s.train.schedule.max_epoch, s.train.epochs);
                             },
                             [](const S &s) { return std::to_string(s.train.epochs); }};
        b["train.lambda"] = {[](S &s, const std::string &k, const std::string &v) { s.train.weights.lambda = parse_double(k, v); },
                             [](const S &s) { return fmt(s.train.weights.lambda); }};
        b["train.w_photo"] = {[](S &s, const std::string &k, const std::string &v) { s.train.weights.photo = parse_double(k, v); },
                              [](const S &s) { return fmt(s.train.weights.photo); }};
        b["train.w_normal"] = {[](S &s, const std::string &k, const std::string &v) { s.train.weights.normal = parse_double(k, v); },
                               [](const S &s) { return fmt(s.train.weights.normal); }};
        b["train.w_nc"] = {[](S &s, const std::string &k, const std::string &v) { s.train.weights.consistency = parse_double(k, v); },
                           [](const S &s) { return fmt(s.train.weights.consistency); }};
        b["train.grad_clip"] = bind_double(&S::train, &TrainConfig::grad_clip);
        b["train.masked_loss"] = bind_bool(&S::train, &TrainConfig::masked_loss);
        b["train.tile_size"] = {[](S &s, const std::string &k, const std::string &v) { s.train.render.tile_size = static_cast<int>(parse_int(k, v)); },
                                [](const S &s) { return std::to_string(s.train.render.tile_size); }};
        auto sched_d = [](double StageSchedule::*m) {
            return Binding{[=](S &s, const std::string &k, const std::string &v) { s.train.schedule.*m = parse_double(k, v); },
                           [=](const S &s) { return fmt(s.train.schedule.*m); }};
        };
        auto sched_i = [](int StageSchedule::*m) {
            return Binding{[=](S &s, const std::string &k, const std::string &v) { s.train.schedule.*m = static_cast<int>(parse_int(k, v)); },
                           [=](const S &s) { return std::to_string(s.train.schedule.*m); }};
        };
        b["train.stage1_end"] = sched_i(&StageSchedule::stage1_end);
        b["train.stage2_end"] = sched_i(&StageSchedule::stage2_end);
        b["train.lr_scales"] = sched_d(&StageSchedule::scales_lr);
        b["train.lr_color"] = sched_d(&StageSchedule::color_lr);
        b["train.lr_joints"] = sched_d(&StageSchedule::joints_lr);
        b["train.lr_displacement"] = sched_d(&StageSchedule::displacement_lr);
        b["train.lr_displacement_stage2"] = sched_d(&StageSchedule::displacement_stage2_lr);
        b["train.lr_pose"] = sched_d(&StageSchedule::pose_lr);
        b["train.pose_refinement"] = {[](S &s, const std::string &k, const std::string &v) { s.train.schedule.pose_refinement = parse_bool(k, v); },
                                      [](const S &s) { return std::string(s.train.schedule.pose_refinement ? "true" : "false"); }};

        auto grid_i = [](int HashGridConfig::*m) {
            return Binding{[=](S &s, const std::string &k, const std::string &v) { s.model.grid.*m = static_cast<int>(parse_int(k, v)); },
                           [=](const S &s) { return std::to_string(s.model.grid.*m); }};
        };
        b["model.levels"] = grid_i(&HashGridConfig::levels);
        b["model.log2_table_size"] = grid_i(&HashGridConfig::log2_table_size);
        b["model.features_per_entry"] = grid_i(&HashGridConfig::features_per_entry);
        b["model.base_resolution"] = grid_i(&HashGridConfig::base_resolution);
        b["model.hidden_width"] = grid_i(&HashGridConfig::hidden_width);
        b["model.hidden_layers"] = grid_i(&HashGridConfig::hidden_layers);
        b["model.growth"] = {[](S &s, const std::string &k, const std::string &v) { s.model.grid.growth = parse_double(k, v); },
                             [](const S &s) { return fmt(s.model.grid.growth); }};
        b["model.aabb_padding"] = bind_double(&S::model, &ModelOptions::aabb_padding);
        b["model.epsilon"] = bind_double(&S::model, &ModelOptions::epsilon);
        b["model.initial_scale"] = bind_double(&S::model, &ModelOptions::initial_scale);

        b["synth.views"] = bind_int(&S::synth, &SynthConfig::views);
        b["synth.heldout_views"] = bind_int(&S::synth, &SynthConfig::heldout_views);
        b["synth.width"] = bind_int(&S::synth, &SynthConfig::width);
        b["synth.height"] = bind_int(&S::synth, &SynthConfig::height);
        b["synth.segments"] = bind_int(&S::synth, &SynthConfig::segments);
        b["synth.rings"] = bind_int(&S::synth, &SynthConfig::rings);
        b["synth.gt_subdivisions"] = bind_int(&S::synth, &SynthConfig::gt_subdivisions);
        b["synth.radius"] = bind_double(&S::synth, &SynthConfig::radius);
        b["synth.half_length"] = bind_double(&S::synth, &SynthConfig::half_length);
        b["synth.bump_amplitude"] = bind_double(&S::synth, &SynthConfig::bump_amplitude);
        b["synth.bend"] = bind_double(&S::synth, &SynthConfig::bend);
        b["synth.camera_distance"] = bind_double(&S::synth, &SynthConfig::camera_distance);
        b["synth.camera_height"] = bind_double(&S::synth, &SynthConfig::camera_height);
        b["synth.focal"] = bind_double(&S::synth, &SynthConfig::focal);
        b["synth.blend_width"] = bind_double(&S::synth, &SynthConfig::blend_width);
        b["synth.initial_scale"] = bind_double(&S::synth, &SynthConfig::initial_scale);

        b["eval.samples"] = {[](S &s, const std::string &k, const std::string &v) {
                                 const long long n = parse_int(k, v);
                                 if (n <= 0) throw DataError("config: 'eval.samples' must be positive");
                                 s.eval_samples = static_cast<std::size_t>(n);
                             },
                             [](const S &s) { return std::to_string(s.eval_samples); }};
        return b;
    }();
    return table;
}

} // namespace

ConfigMap parse_config(const std::string &text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw DataError("config line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw DataError("config line " + std::to_string(lineno) + ": empty key");
        out[section.empty() ? key : section + "." + key] = unquote(trim(line.substr(eq + 1)));
    }
    return out;
}

ConfigMap load_config(const std::filesystem::path &path) { return parse_config(read_file(path)); }

void apply_override(ConfigMap &config, const std::string &assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw DataError("override must look like section.key=value: " + assignment);
    config[trim(assignment.substr(0, eq))] = unquote(trim(assignment.substr(eq + 1)));
}

Settings resolve_settings(const ConfigMap &config) {
    Settings s;
    for (const auto &[key, value] : config) {
        const auto it = bindings().find(key);
        if (it == bindings().end()) throw DataError("config: unknown key '" + key + "'");
        it->second.set(s, key, value);
    }
    try {
        s.train.weights.validate();
    } catch (const std::invalid_argument &e) {
        throw DataError(std::string("config: ") + e.what());
    }
    if (s.train.epochs < 1) throw DataError("config: 'train.epochs' must be at least 1");
    return s;
}

ConfigMap echo_settings(const Settings &settings) {
    ConfigMap out;
    for (const auto &[key, binding] : bindings()) out[key] = binding.get(settings);
    return out;
}

} // namespace avatar
