#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace avatar {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
};

/// Rescales grads in place so their L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_global_norm(std::span<double> grads, double max_norm);

/// Throws DivergenceError naming the group if any gradient is NaN or infinite.
void check_finite(std::span<const double> grads, std::string_view group);

/// One bias-corrected Adam update. State is sized lazily on first use.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState &state, double lr,
               const AdamHyper &hyper = {});

} // namespace avatar
