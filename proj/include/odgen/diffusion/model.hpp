#pragma once

#include <vector>

#include "odgen/cond/encoders.hpp"
#include "odgen/nn/module.hpp"

namespace odgen {

// Pixel-space epsilon-prediction UNet with a control branch: a trainable copy
// of the encoder path whose per-level features feed back into the decoder
// skip connections through zero-initialized 1x1 convolutions. The encoded
// image list is injected at the bottleneck entry (spatial size H/8), also
// through a zero-initialized projection, so an untrained branch leaves the
// base model's output untouched.
struct DenoiserConfig {
    int image_size = 64;
    int in_channels = 3;
    int base_channels = 32;
    std::vector<int> channel_mults = {1, 2, 2, 4};  // 4 levels: H, H/2, H/4, H/8
    int groups = 8;
    int sin_dim = 64;    // sinusoid width fed to the time MLP
    int time_dim = 128;  // time embedding width
    int embed_rows = 8;  // L
    int embed_dim = 64;  // D
    int cond_length = 4; // N, object slots in text/image lists
    int cond_channels = 256;  // image-list encoder output width

    int levels() const { return static_cast<int>(channel_mults.size()); }
    int channels(int lvl) const { return base_channels * channel_mults[static_cast<size_t>(lvl)]; }
    int bottleneck_size() const { return image_size >> (levels() - 1); }
};

template <typename S>
struct ControlTaps {
    std::vector<nn::Tensor<S>> skips;  // one per level
    nn::Tensor<S> mid;
};

// Encoder path + middle block, shared by the base model and its control copy.
template <typename S>
struct UNetEncoder {
    nn::Conv2d<S> conv_in;
    std::vector<nn::ResBlock<S>> res;   // one per level
    std::vector<nn::Conv2d<S>> down;    // levels-1 stride-2 convs
    nn::ResBlock<S> mid1;
    nn::CrossAttention<S> mid_attn;
    nn::ResBlock<S> mid2;

    void init(const DenoiserConfig& cfg, odgen::Rng& rng) {
        const int levels = cfg.levels();
        conv_in.init(cfg.in_channels, cfg.channels(0), 3, 1, 1, rng, std::sqrt(2.0));
        res.resize(static_cast<size_t>(levels));
        down.resize(static_cast<size_t>(levels - 1));
        int prev = cfg.channels(0);
        for (int lvl = 0; lvl < levels; ++lvl) {
            if (lvl > 0) {
                down[static_cast<size_t>(lvl - 1)].init(prev, prev, 3, 2, 1, rng, std::sqrt(2.0));
            }
            res[static_cast<size_t>(lvl)].init(prev, cfg.channels(lvl), cfg.time_dim, cfg.groups,
                                               rng);
            prev = cfg.channels(lvl);
        }
        mid1.init(prev, prev, cfg.time_dim, cfg.groups, rng);
        mid_attn.init(prev, cfg.embed_dim, cfg.groups, rng);
        mid2.init(prev, prev, cfg.time_dim, cfg.groups, rng);
    }

    struct Feats {
        std::vector<nn::Tensor<S>> skips;
        nn::Tensor<S> mid;
    };

    // `inject` (optional) is added right after the last downsample, i.e. at
    // bottleneck entry before the deepest residual block.
    Feats forward(nn::Graph<S>& g, nn::Tensor<S> x, nn::Tensor<S> temb, nn::Tensor<S> ctx,
                  const nn::Tensor<S>* inject) const {
        Feats feats;
        nn::Tensor<S> h = conv_in.forward(g, x);
        const int levels = static_cast<int>(res.size());
        for (int lvl = 0; lvl < levels; ++lvl) {
            if (lvl > 0) h = down[static_cast<size_t>(lvl - 1)].forward(g, h);
            if (lvl == levels - 1 && inject != nullptr) h = nn::add(g, h, *inject);
            h = res[static_cast<size_t>(lvl)].forward(g, h, temb);
            feats.skips.push_back(h);
        }
        h = mid1.forward(g, h, temb);
        h = mid_attn.forward(g, h, ctx);
        feats.mid = mid2.forward(g, h, temb);
        return feats;
    }

    void params(nn::ParamList<S>& out, const std::string& prefix) const {
        conv_in.params(out, prefix + ".conv_in");
        for (size_t i = 0; i < res.size(); ++i) res[i].params(out, prefix + strfmt(".res%zu", i));
        for (size_t i = 0; i < down.size(); ++i) down[i].params(out, prefix + strfmt(".down%zu", i));
        mid1.params(out, prefix + ".mid1");
        mid_attn.params(out, prefix + ".mid_attn");
        mid2.params(out, prefix + ".mid2");
    }
};

template <typename S>
struct UNetDecoder {
    std::vector<nn::ResBlock<S>> res;  // one per level, consumed deepest-first
    std::vector<nn::Conv2d<S>> up;     // levels-1 convs after nearest upsample
    nn::GroupNorm<S> out_norm;
    nn::Conv2d<S> conv_out;            // zero-init so the model starts at 0

    void init(const DenoiserConfig& cfg, odgen::Rng& rng) {
        const int levels = cfg.levels();
        res.resize(static_cast<size_t>(levels));
        up.resize(static_cast<size_t>(levels - 1));
        for (int lvl = levels - 1; lvl >= 0; --lvl) {
            const int target = cfg.channels(std::max(lvl - 1, 0));
            res[static_cast<size_t>(lvl)].init(2 * cfg.channels(lvl), target, cfg.time_dim,
                                               cfg.groups, rng);
            if (lvl > 0) {
                up[static_cast<size_t>(lvl - 1)].init(target, target, 3, 1, 1, rng, std::sqrt(2.0));
            }
        }
        out_norm.init(cfg.channels(0), cfg.groups);
        conv_out.init(cfg.channels(0), cfg.in_channels, 3, 1, 1, rng, 1.0, /*zero=*/true);
    }

    nn::Tensor<S> forward(nn::Graph<S>& g, const typename UNetEncoder<S>::Feats& feats,
                          nn::Tensor<S> temb) const {
        nn::Tensor<S> h = feats.mid;
        const int levels = static_cast<int>(res.size());
        for (int lvl = levels - 1; lvl >= 0; --lvl) {
            h = nn::concat_axis1(g, h, feats.skips[static_cast<size_t>(lvl)]);
            h = res[static_cast<size_t>(lvl)].forward(g, h, temb);
            if (lvl > 0) {
                h = up[static_cast<size_t>(lvl - 1)].forward(g, nn::upsample_nearest2(g, h));
            }
        }
        return conv_out.forward(g, nn::silu(g, out_norm.forward(g, h)));
    }

    void params(nn::ParamList<S>& out, const std::string& prefix) const {
        for (size_t i = 0; i < res.size(); ++i) res[i].params(out, prefix + strfmt(".res%zu", i));
        for (size_t i = 0; i < up.size(); ++i) up[i].params(out, prefix + strfmt(".up%zu", i));
        out_norm.params(out, prefix + ".out_norm");
        conv_out.params(out, prefix + ".conv_out");
    }
};

template <typename S>
struct Denoiser {
    DenoiserConfig cfg;
    nn::Linear<S> time_fc1, time_fc2;
    UNetEncoder<S> enc;
    UNetDecoder<S> dec;

    UNetEncoder<S> ctrl_enc;                 // trainable copy of the encoder path
    nn::Conv2d<S> ctrl_inject;               // cond_channels -> bottleneck-entry width, zero-init
    std::vector<nn::Conv2d<S>> ctrl_zero;    // zero conv per level tap
    nn::Conv2d<S> ctrl_zero_mid;
    ImageListEncoder<S> ilist_enc;
    TextListEncoder<S> tlist_enc;

    void init(const DenoiserConfig& config, odgen::Rng& rng) {
        cfg = config;
        time_fc1.init(cfg.sin_dim, cfg.time_dim, rng);
        time_fc2.init(cfg.time_dim, cfg.time_dim, rng);
        enc.init(cfg, rng);
        dec.init(cfg, rng);
        ctrl_enc.init(cfg, rng);
        const int levels = cfg.levels();
        ctrl_inject.init(cfg.cond_channels, cfg.channels(levels - 2), 1, 1, 0, rng, 1.0, true);
        ctrl_zero.resize(static_cast<size_t>(levels));
        for (int lvl = 0; lvl < levels; ++lvl) {
            ctrl_zero[static_cast<size_t>(lvl)].init(cfg.channels(lvl), cfg.channels(lvl), 1, 1, 0,
                                                     rng, 1.0, true);
        }
        ctrl_zero_mid.init(cfg.channels(levels - 1), cfg.channels(levels - 1), 1, 1, 0, rng, 1.0,
                           true);
        ilist_enc.init(cfg.cond_length, rng);
        tlist_enc.init(cfg.cond_length, rng);
        clone_base_into_control();
    }

    // copy the base encoder weights into the control branch
    void clone_base_into_control() {
        nn::ParamList<S> src, dst;
        enc.params(src, "x");
        ctrl_enc.params(dst, "x");
        for (size_t i = 0; i < src.size(); ++i) {
            std::copy(src[i].tensor.val(), src[i].tensor.val() + src[i].tensor.numel(),
                      dst[i].tensor.val());
        }
    }

    nn::Tensor<S> time_embedding(nn::Graph<S>& g, const std::vector<int>& t) const {
        nn::Tensor<S> sinus = nn::sinusoidal_time_embedding<S>(t, cfg.sin_dim);
        return time_fc2.forward(g, nn::silu(g, time_fc1.forward(g, sinus)));
    }

    // plain conditional prediction from the base model
    nn::Tensor<S> forward_base(nn::Graph<S>& g, nn::Tensor<S> x, const std::vector<int>& t,
                               nn::Tensor<S> ctx) const {
        nn::Tensor<S> temb = time_embedding(g, t);
        auto feats = enc.forward(g, x, temb, ctx, nullptr);
        return dec.forward(g, feats, temb);
    }

    // context for the control branch: global prompt embedding followed by the
    // fused text-list embedding along the sequence axis
    nn::Tensor<S> fuse_text_context(nn::Graph<S>& g, nn::Tensor<S> global_ctx,
                                    nn::Tensor<S> stacked_text) const {
        nn::Tensor<S> fused = tlist_enc.forward(g, stacked_text);  // [B,1,L,D]
        fused = nn::reshape(g, fused, {fused.dim(0), fused.dim(2), fused.dim(3)});
        return nn::concat_axis1(g, global_ctx, fused);  // [B,2L,D]
    }

    // full conditional prediction: base + control taps
    nn::Tensor<S> forward_controlled(nn::Graph<S>& g, nn::Tensor<S> x, const std::vector<int>& t,
                                     nn::Tensor<S> ctx_base, nn::Tensor<S> ctx_ctrl,
                                     nn::Tensor<S> image_list) const {
        nn::Tensor<S> temb = time_embedding(g, t);
        nn::Tensor<S> cond = ctrl_inject.forward(g, ilist_enc.forward(g, image_list));
        auto ctaps = ctrl_enc.forward(g, x, temb, ctx_ctrl, &cond);
        auto feats = enc.forward(g, x, temb, ctx_base, nullptr);
        for (size_t lvl = 0; lvl < feats.skips.size(); ++lvl) {
            feats.skips[lvl] =
                nn::add(g, feats.skips[lvl], ctrl_zero[lvl].forward(g, ctaps.skips[lvl]));
        }
        feats.mid = nn::add(g, feats.mid, ctrl_zero_mid.forward(g, ctaps.mid));
        return dec.forward(g, feats, temb);
    }

    void base_params(nn::ParamList<S>& out) const {
        time_fc1.params(out, "time.fc1");
        time_fc2.params(out, "time.fc2");
        enc.params(out, "unet.enc");
        dec.params(out, "unet.dec");
    }
    void control_params(nn::ParamList<S>& out) const {
        ctrl_enc.params(out, "ctrl.enc");
        ctrl_inject.params(out, "ctrl.inject");
        for (size_t i = 0; i < ctrl_zero.size(); ++i) {
            ctrl_zero[i].params(out, strfmt("ctrl.zero%zu", i));
        }
        ctrl_zero_mid.params(out, "ctrl.zero_mid");
        ilist_enc.params(out, "cond.ilist");
        tlist_enc.params(out, "cond.tlist");
    }
    void all_params(nn::ParamList<S>& out) const {
        base_params(out);
        control_params(out);
    }
};

}  // namespace odgen
