#pragma once

#include <string>
#include <vector>

#include "odgen/nn/tensor.hpp"

namespace odgen {

// Forward-process schedule: per-step noise rates beta[t] and the cumulative
// signal fraction alpha_bar[t] = prod_{s<=t} (1 - beta[s]).
struct NoiseSchedule {
    int steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha_bar;

    // kind: "linear" (beta from 1e-4 to 2e-2) or "cosine" (squared-cosine
    // alpha_bar with offset 0.008; the final beta is capped at 0.999).
    static NoiseSchedule make(int steps, const std::string& kind = "linear");
};

// x_t = sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps, per sample.
// x0, eps: [B,C,H,W]; t: one step index per sample.
template <typename S>
nn::Tensor<S> forward_noise(const nn::Tensor<S>& x0, const std::vector<int>& t,
                            const nn::Tensor<S>& eps, const NoiseSchedule& schedule) {
    if (!x0.same_shape(eps)) {
        throw ShapeMismatchError("forward_noise: x0/eps shape mismatch");
    }
    if (x0.dim(0) != static_cast<int>(t.size())) {
        throw ShapeMismatchError("forward_noise: one timestep per sample required");
    }
    nn::Tensor<S> out = nn::Tensor<S>::zeros(x0.shape());
    const int64_t per = x0.numel() / x0.dim(0);
    for (int b = 0; b < x0.dim(0); ++b) {
        const int step = t[static_cast<size_t>(b)];
        if (step < 0 || step >= schedule.steps) {
            throw BadScheduleError(strfmt("timestep %d outside schedule of %d", step,
                                          schedule.steps));
        }
        const S sa = static_cast<S>(std::sqrt(schedule.alpha_bar[static_cast<size_t>(step)]));
        const S sn = static_cast<S>(std::sqrt(1.0 - schedule.alpha_bar[static_cast<size_t>(step)]));
        const S* px = x0.val() + b * per;
        const S* pe = eps.val() + b * per;
        S* po = out.val() + b * per;
        for (int64_t i = 0; i < per; ++i) po[i] = sa * px[i] + sn * pe[i];
    }
    return out;
}

}  // namespace odgen
