#pragma once

#include <cmath>
#include <vector>

#include "odgen/nn/module.hpp"

namespace odgen::nn {

// Adam with bias correction and optional global-norm gradient clipping.
template <typename S>
class Adam {
public:
    Adam(ParamList<S> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            slots_.push_back({std::vector<double>(p.tensor.numel(), 0.0),
                              std::vector<double>(p.tensor.numel(), 0.0)});
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    int64_t steps() const { return t_; }

    // Applies one update from accumulated grads, then zeroes them.
    // Returns the pre-clip global gradient norm.
    double step(double grad_clip = 0.0) {
        ++t_;
        double sq_norm = 0.0;
        for (auto& p : params_) {
            auto& d = *p.tensor.data();
            d.ensure_grad();
            for (S gv : d.grad) sq_norm += static_cast<double>(gv) * static_cast<double>(gv);
        }
        const double norm = std::sqrt(sq_norm);
        const double clip_scale =
            (grad_clip > 0.0 && norm > grad_clip) ? grad_clip / norm : 1.0;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& d = *params_[i].tensor.data();
            auto& m = slots_[i].m;
            auto& v = slots_[i].v;
            for (size_t j = 0; j < d.val.size(); ++j) {
                const double gj = static_cast<double>(d.grad[j]) * clip_scale;
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
                const double mh = m[j] / bc1;
                const double vh = v[j] / bc2;
                d.val[j] -= static_cast<S>(lr_ * mh / (std::sqrt(vh) + eps_));
            }
            std::fill(d.grad.begin(), d.grad.end(), S(0));
        }
        return norm;
    }

    void zero_grad() {
        for (auto& p : params_) {
            auto& d = *p.tensor.data();
            std::fill(d.grad.begin(), d.grad.end(), S(0));
        }
    }

private:
    struct Slot {
        std::vector<double> m, v;
    };
    ParamList<S> params_;
    std::vector<Slot> slots_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

}  // namespace odgen::nn
