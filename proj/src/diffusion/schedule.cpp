#include "odgen/diffusion/schedule.hpp"

#include <cmath>
#include <numbers>

#include "odgen/core/error.hpp"

namespace odgen {

NoiseSchedule NoiseSchedule::make(int steps, const std::string& kind) {
    if (steps < 2) {
        throw BadScheduleError(strfmt("schedule needs at least 2 steps, got %d", steps));
    }
    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(static_cast<size_t>(steps));
    s.alpha_bar.resize(static_cast<size_t>(steps));
    if (kind == "linear") {
        const double b0 = 1e-4, b1 = 2e-2;
        for (int t = 0; t < steps; ++t) {
            s.beta[static_cast<size_t>(t)] = b0 + (b1 - b0) * t / (steps - 1);
        }
    } else if (kind == "cosine") {
        // alpha_bar[t] = f(t+1)/f(0) with f(u) = cos^2(((u/T + o)/(1 + o)) * pi/2),
        // offset o = 0.008; the final ratio degenerates to 0, so that one beta
        // is capped at 0.999.
        const double offset = 0.008;
        auto f = [&](double u) {
            const double v =
                std::cos((u / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
            return v * v;
        };
        double prev = f(0.0);
        for (int t = 0; t < steps; ++t) {
            const double cur = f(static_cast<double>(t) + 1.0);
            s.beta[static_cast<size_t>(t)] = std::min(1.0 - cur / prev, 0.999);
            prev = cur;
        }
    } else {
        throw BadScheduleError("unknown schedule kind: " + kind);
    }
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        prod *= 1.0 - s.beta[static_cast<size_t>(t)];
        s.alpha_bar[static_cast<size_t>(t)] = prod;
    }
    return s;
}

}  // namespace odgen
