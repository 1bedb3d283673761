#include "avatar/schedule.hpp"

#include <stdexcept>
#include <string>

namespace avatar {

std::string_view group_name(ParamGroup g) {
    switch (g) {
    case ParamGroup::Scales: return "scales";
    case ParamGroup::ColorField: return "color_field";
    case ParamGroup::Joints: return "joints";
    case ParamGroup::DisplacementField: return "displacement_field";
    case ParamGroup::Pose: return "pose";
    }
    return "unknown";
}

std::optional<double> StageRates::rate(ParamGroup g) const {
    switch (g) {
    case ParamGroup::Scales: return scales;
    case ParamGroup::ColorField: return color_field;
    case ParamGroup::Joints: return joints;
    case ParamGroup::DisplacementField: return displacement_field;
    case ParamGroup::Pose: return pose;
    }
    return std::nullopt;
}

StageRates StageSchedule::stage_of(int epoch) const {
    if (epoch < 1) throw std::out_of_range("epoch numbering starts at 1");
    if (epoch > max_epoch) throw std::out_of_range("epoch " + std::to_string(epoch) + " beyond configured maximum");
    StageRates r;
    r.stage = epoch <= stage1_end ? 1 : (epoch <= stage2_end ? 2 : 3);
    r.scales = scales_lr;
    r.color_field = color_lr;
    if (r.stage < 3) r.joints = joints_lr;
    r.displacement_field = r.stage == 2 ? displacement_stage2_lr : displacement_lr;
    if (pose_refinement) r.pose = pose_lr;
    return r;
}

} // namespace avatar
