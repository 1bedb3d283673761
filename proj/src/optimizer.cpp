#include "avatar/optimizer.hpp"

#include "avatar/types.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace avatar {

double clip_global_norm(std::span<double> grads, double max_norm) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (double &g : grads) g *= s;
    }
    return norm;
}

void check_finite(std::span<const double> grads, std::string_view group) {
    for (double g : grads)
        if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in group " + std::string(group));
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState &state, double lr,
               const AdamHyper &hyper) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient size mismatch");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        const double mh = state.m[i] / c1;
        const double vh = state.v[i] / c2;
        params[i] -= lr * mh / (std::sqrt(vh) + hyper.eps);
    }
}

} // namespace avatar
