#pragma once

#include "avatar/image.hpp"
#include "avatar/losses.hpp"
#include "avatar/model.hpp"
#include "avatar/optimizer.hpp"
#include "avatar/schedule.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace avatar {

struct TrainFrame {
    ImagePlane color; // 3 channels in [0, 1]
    std::optional<ImagePlane> normal; // 3 channels, signed unit vectors
    std::optional<ImagePlane> mask; // 1 channel, > 0.5 is foreground
    Camera camera;
    PoseFrame pose;
};

struct TrainConfig {
    int epochs = 20;
    LossWeights weights;
    StageSchedule schedule;
    double grad_clip = 10.0;
    bool masked_loss = true;
    Vec3 background = Vec3::Zero();
    RenderOptions render;
};

struct IterationLog {
    int epoch = 0;
    int iter = 0;
    double rgb = 0.0;
    double normal = 0.0;
    double nc = 0.0;
    double total = 0.0;
};

struct EpochStats {
    int epoch = 0;
    int stage = 0;
    double rgb = 0.0;
    double normal = 0.0;
    double nc = 0.0;
    double total = 0.0;
};

/// Loss and gradients for one frame. Field gradients are left inside the fields.
struct FrameEvaluation {
    TotalLoss loss;
    ModelGrad grad;
};

class Trainer {
  public:
    Trainer(AvatarModel &model, TrainConfig config);

    const TrainConfig &config() const { return config_; }

    /// One Adam step per frame in dataset order. Throws DivergenceError on a
    /// non-finite loss or gradient; the model then holds the partially updated state.
    EpochStats train_epoch(std::span<const TrainFrame> frames, int epoch, std::vector<IterationLog> *log = nullptr);

    /// Pose-only Adam step on frame `index`; other groups are untouched.
    const PoseFrame &refine_pose(std::span<const TrainFrame> frames, std::size_t index, double lr);

    /// Forward, loss and backward for one frame at the given pose. Zeroes field gradients first.
    FrameEvaluation evaluate(const TrainFrame &frame, const PoseFrame &pose);

  private:
    void ensure_frame_poses(std::span<const TrainFrame> frames);
    void step_group(ParamGroup group, std::span<double> params, std::span<double> grads, double lr, AdamState &state);

    AvatarModel &model_;
    TrainConfig config_;
    AdamState scales_state_;
    AdamState joints_state_;
    AdamState color_state_;
    AdamState displacement_state_;
    std::map<std::size_t, AdamState> pose_states_;
};

/// Window-3 centered moving average; the ends use the available neighbors.
std::vector<double> smooth_window3(std::span<const double> values);

} // namespace avatar
