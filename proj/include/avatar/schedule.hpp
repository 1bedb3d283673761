#pragma once

#include <optional>
#include <string_view>

namespace avatar {

enum class ParamGroup { Scales, ColorField, Joints, DisplacementField, Pose };

inline constexpr ParamGroup kAllGroups[] = {ParamGroup::Scales, ParamGroup::ColorField, ParamGroup::Joints,
                                            ParamGroup::DisplacementField, ParamGroup::Pose};

std::string_view group_name(ParamGroup g);

/// Learning rates active in one epoch. An empty rate means the group is frozen.
struct StageRates {
    int stage = 1;
    std::optional<double> scales;
    std::optional<double> color_field;
    std::optional<double> joints;
    std::optional<double> displacement_field;
    std::optional<double> pose;

    std::optional<double> rate(ParamGroup g) const;
};

struct StageSchedule {
    int stage1_end = 4; // last epoch of stage 1
    int stage2_end = 10;
    int max_epoch = 20;
    double scales_lr = 5e-3;
    double color_lr = 5e-4;
    double joints_lr = 5e-4;
    double displacement_lr = 1e-4;
    double displacement_stage2_lr = 8e-4;
    double pose_lr = 1e-4;
    bool pose_refinement = false;

    /// Epochs are 1-based; anything outside [1, max_epoch] throws std::out_of_range.
    StageRates stage_of(int epoch) const;
};

} // namespace avatar
