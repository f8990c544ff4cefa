#pragma once

#include "odgen/diffusion/model.hpp"
#include "odgen/diffusion/schedule.hpp"

namespace odgen {

// One denoising training example set, already in tensor form.
template <typename S>
struct NoisedBatch {
    nn::Tensor<S> x0;      // [B,3,H,W]
    std::vector<int> t;    // per-sample timestep
    nn::Tensor<S> eps;     // [B,3,H,W]
};

template <typename S>
nn::Tensor<S> squared_error_map(nn::Graph<S>& g, nn::Tensor<S> pred, nn::Tensor<S> eps) {
    nn::Tensor<S> diff = nn::sub(g, eps, pred);
    return nn::mul(g, diff, diff);
}

// mean || eps - model(x_t, t, ctx) ||^2
template <typename S>
nn::Tensor<S> reconstruction_loss(nn::Graph<S>& g, const Denoiser<S>& model,
                                  const NoisedBatch<S>& batch, nn::Tensor<S> ctx,
                                  const NoiseSchedule& schedule) {
    nn::Tensor<S> xt = forward_noise(batch.x0, batch.t, batch.eps, schedule);
    nn::Tensor<S> pred = model.forward_base(g, xt, batch.t, ctx);
    return nn::mean_all(g, squared_error_map(g, pred, batch.eps));
}

// object-crop branch plus lambda-weighted whole-scene branch
template <typename S>
nn::Tensor<S> dual_finetune_loss(nn::Graph<S>& g, const Denoiser<S>& model,
                                 const NoisedBatch<S>& object_batch, nn::Tensor<S> object_ctx,
                                 const NoisedBatch<S>& scene_batch, nn::Tensor<S> scene_ctx,
                                 double lambda, const NoiseSchedule& schedule) {
    nn::Tensor<S> loss = reconstruction_loss(g, model, object_batch, object_ctx, schedule);
    if (lambda != 0.0) {
        nn::Tensor<S> scene = reconstruction_loss(g, model, scene_batch, scene_ctx, schedule);
        loss = nn::add(g, loss, nn::scale(g, scene, lambda));
    }
    return loss;
}

// Controlled reconstruction with foreground re-weighting:
//   L = mean(e) + gamma * mean(e * mask)
// where e is the per-element squared error and the masked term still averages
// over all elements (background entries contribute zeros).
template <typename S>
nn::Tensor<S> control_loss(nn::Graph<S>& g, const Denoiser<S>& model, const NoisedBatch<S>& batch,
                           nn::Tensor<S> ctx_base, nn::Tensor<S> ctx_ctrl,
                           nn::Tensor<S> image_list, nn::Tensor<S> mask, double gamma,
                           const NoiseSchedule& schedule) {
    if (mask.ndim() != 4 || mask.dim(0) != batch.x0.dim(0) || mask.dim(1) != 1 ||
        mask.dim(2) != batch.x0.dim(2) || mask.dim(3) != batch.x0.dim(3)) {
        throw ShapeMismatchError("control_loss: mask must be [B,1,H,W] at the loss resolution");
    }
    nn::Tensor<S> xt = forward_noise(batch.x0, batch.t, batch.eps, schedule);
    nn::Tensor<S> pred = model.forward_controlled(g, xt, batch.t, ctx_base, ctx_ctrl, image_list);
    nn::Tensor<S> err = squared_error_map(g, pred, batch.eps);
    nn::Tensor<S> loss = nn::mean_all(g, err);
    if (gamma != 0.0) {
        nn::Tensor<S> masked = nn::mean_all(g, nn::mul_mask(g, err, mask));
        loss = nn::add(g, loss, nn::scale(g, masked, gamma));
    }
    return loss;
}

}  // namespace odgen
