#include "avatar/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace avatar {

namespace {

std::span<double> flat(std::vector<Vec3> &v) { return {v.empty() ? nullptr : v.front().data(), v.size() * 3}; }
std::span<double> flat(std::vector<Vec2> &v) { return {v.empty() ? nullptr : v.front().data(), v.size() * 2}; }

std::vector<double> pose_vector(const PoseFrame &p) {
    std::vector<double> out;
    out.reserve(p.joint_rotations.size() * 3 + 3);
    for (const Vec3 &r : p.joint_rotations) out.insert(out.end(), r.data(), r.data() + 3);
    out.insert(out.end(), p.translation.data(), p.translation.data() + 3);
    return out;
}

void assign_pose(PoseFrame &p, std::span<const double> v) {
    for (std::size_t j = 0; j < p.joint_rotations.size(); ++j) p.joint_rotations[j] = Vec3(v[3 * j], v[3 * j + 1], v[3 * j + 2]);
    const std::size_t o = p.joint_rotations.size() * 3;
    p.translation = Vec3(v[o], v[o + 1], v[o + 2]);
}

std::vector<double> pose_grad_vector(const ModelGrad &g) {
    std::vector<double> out;
    for (const Vec3 &r : g.pose_rotations) out.insert(out.end(), r.data(), r.data() + 3);
    out.insert(out.end(), g.pose_translation.data(), g.pose_translation.data() + 3);
    return out;
}

} // namespace

Trainer::Trainer(AvatarModel &model, TrainConfig config) : model_(model), config_(std::move(config)) {
    config_.weights.validate();
}

void Trainer::ensure_frame_poses(std::span<const TrainFrame> frames) {
    if (model_.frame_poses.size() == frames.size()) return;
    model_.frame_poses.clear();
    for (const TrainFrame &f : frames) model_.frame_poses.push_back(f.pose);
    pose_states_.clear();
}

FrameEvaluation Trainer::evaluate(const TrainFrame &frame, const PoseFrame &pose) {
    model_.displacement.zero_grad();
    model_.color.zero_grad();
    FrameState st = forward_frame(model_, pose, frame.camera, config_.background, config_.render);
    const ImagePlane *mask = config_.masked_loss && frame.mask ? &*frame.mask : nullptr;
    const ImagePlane *gt_normal = frame.normal ? &*frame.normal : nullptr;
    FrameEvaluation ev;
    ev.loss = total_loss(st.color_image, frame.color, st.normal_image, gt_normal, st.posed, model_.mesh,
                         model_.adjacency, config_.weights, mask);
    if (!std::isfinite(ev.loss.total)) throw DivergenceError("non-finite loss");
    ev.grad.reset(model_);
    backward_frame(model_, st, frame.camera, config_.background, ev.loss.grad_color, ev.loss.grad_normal,
                   ev.loss.grad_vertices, ev.grad);
    return ev;
}

void Trainer::step_group(ParamGroup group, std::span<double> params, std::span<double> grads, double lr,
                         AdamState &state) {
    check_finite(grads, group_name(group));
    clip_global_norm(grads, config_.grad_clip);
    adam_step(params, grads, state, lr);
}

EpochStats Trainer::train_epoch(std::span<const TrainFrame> frames, int epoch, std::vector<IterationLog> *log) {
    if (frames.empty()) throw DataError("training dataset is empty");
    const StageRates rates = config_.schedule.stage_of(epoch);
    if (rates.pose) ensure_frame_poses(frames);

    EpochStats stats;
    stats.epoch = epoch;
    stats.stage = rates.stage;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const PoseFrame &pose = rates.pose ? model_.frame_poses[k] : frames[k].pose;
        FrameEvaluation ev = evaluate(frames[k], pose);

        if (rates.scales) step_group(ParamGroup::Scales, flat(model_.log_scales), flat(ev.grad.log_scales), *rates.scales, scales_state_);
        if (rates.joints) step_group(ParamGroup::Joints, flat(model_.skeleton.rest_joints), flat(ev.grad.joints), *rates.joints, joints_state_);
        if (rates.color_field)
            step_group(ParamGroup::ColorField, model_.color.params(), model_.color.grad(), *rates.color_field, color_state_);
        if (rates.displacement_field)
            step_group(ParamGroup::DisplacementField, model_.displacement.params(), model_.displacement.grad(),
                       *rates.displacement_field, displacement_state_);
        if (rates.pose) {
            std::vector<double> p = pose_vector(model_.frame_poses[k]);
            std::vector<double> g = pose_grad_vector(ev.grad);
            step_group(ParamGroup::Pose, p, g, *rates.pose, pose_states_[k]);
            assign_pose(model_.frame_poses[k], p);
        }

        const TotalLoss &l = ev.loss;
        stats.rgb += l.rgb;
        stats.normal += l.normal;
        stats.nc += l.consistency;
        stats.total += l.total;
        if (log) log->push_back({epoch, static_cast<int>(k), l.rgb, l.normal, l.consistency, l.total});
    }
    const double n = static_cast<double>(frames.size());
    stats.rgb /= n;
    stats.normal /= n;
    stats.nc /= n;
    stats.total /= n;
    return stats;
}

const PoseFrame &Trainer::refine_pose(std::span<const TrainFrame> frames, std::size_t index, double lr) {
    if (index >= frames.size()) throw std::out_of_range("frame index out of range");
    ensure_frame_poses(frames);
    FrameEvaluation ev = evaluate(frames[index], model_.frame_poses[index]);
    std::vector<double> p = pose_vector(model_.frame_poses[index]);
    std::vector<double> g = pose_grad_vector(ev.grad);
    step_group(ParamGroup::Pose, p, g, lr, pose_states_[index]);
    assign_pose(model_.frame_poses[index], p);
    model_.displacement.zero_grad();
    model_.color.zero_grad();
    return model_.frame_poses[index];
}

std::vector<double> smooth_window3(std::span<const double> values) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::size_t lo = i == 0 ? 0 : i - 1;
        const std::size_t hi = std::min(values.size() - 1, i + 1);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += values[j];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

} // namespace avatar
