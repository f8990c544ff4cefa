#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "odgen/core/rng.hpp"
#include "odgen/nn/ops.hpp"
#include "odgen/nn/tensor.hpp"

namespace odgen::nn {

template <typename S>
struct NamedTensor {
    std::string name;
    Tensor<S> tensor;
};

template <typename S>
using ParamList = std::vector<NamedTensor<S>>;

template <typename S>
inline void fill_normal(Tensor<S>& t, odgen::Rng& rng, double std_dev) {
    S* p = t.val();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<S>(rng.gaussian() * std_dev);
}

// He-style init: std = gain / sqrt(fan_in)
template <typename S>
inline Tensor<S> init_weight(std::vector<int> shape, int fan_in, odgen::Rng& rng,
                             double gain = 1.0) {
    Tensor<S> t = Tensor<S>::zeros(std::move(shape), true);
    fill_normal(t, rng, gain / std::sqrt(static_cast<double>(fan_in)));
    return t;
}

template <typename S>
struct Linear {
    Tensor<S> w;  // [in, out]
    Tensor<S> b;  // [out]

    void init(int in, int out, odgen::Rng& rng, double gain = 1.0, bool zero = false) {
        w = zero ? Tensor<S>::zeros({in, out}, true) : init_weight<S>({in, out}, in, rng, gain);
        b = Tensor<S>::zeros({out}, true);
    }
    Tensor<S> forward(Graph<S>& g, Tensor<S> x) const { return linear(g, x, w, b); }
    void params(ParamList<S>& out, const std::string& prefix) const {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

template <typename S>
struct Conv2d {
    Tensor<S> w;  // [out, in, k, k]
    Tensor<S> b;  // [out]
    int stride = 1;
    int pad = 1;

    void init(int in, int out, int k, int stride_, int pad_, odgen::Rng& rng, double gain = 1.0,
              bool zero = false) {
        stride = stride_;
        pad = pad_;
        w = zero ? Tensor<S>::zeros({out, in, k, k}, true)
                 : init_weight<S>({out, in, k, k}, in * k * k, rng, gain);
        b = Tensor<S>::zeros({out}, true);
    }
    Tensor<S> forward(Graph<S>& g, Tensor<S> x) const { return conv2d(g, x, w, b, stride, pad); }
    void params(ParamList<S>& out, const std::string& prefix) const {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

template <typename S>
struct GroupNorm {
    Tensor<S> gamma;
    Tensor<S> beta;
    int groups = 8;

    void init(int channels, int groups_) {
        groups = std::min(groups_, channels);
        while (channels % groups != 0) --groups;  // keep divisibility for small widths
        gamma = Tensor<S>::zeros({channels}, true);
        for (int i = 0; i < channels; ++i) gamma.val()[i] = S(1);
        beta = Tensor<S>::zeros({channels}, true);
    }
    Tensor<S> forward(Graph<S>& g, Tensor<S> x) const {
        return group_norm(g, x, gamma, beta, groups);
    }
    void params(ParamList<S>& out, const std::string& prefix) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

// Single-head cross-attention over flattened spatial tokens; queries from the
// feature map, keys/values from an external [B,S,D] context.
template <typename S>
struct CrossAttention {
    GroupNorm<S> norm;
    Linear<S> to_q;  // [C -> C]
    Linear<S> to_k;  // [D -> C]
    Linear<S> to_v;  // [D -> C]
    Linear<S> to_out;
    int channels = 0;

    void init(int channels_, int ctx_dim, int groups, odgen::Rng& rng) {
        channels = channels_;
        norm.init(channels, groups);
        to_q.init(channels, channels, rng);
        to_k.init(ctx_dim, channels, rng);
        to_v.init(ctx_dim, channels, rng);
        to_out.init(channels, channels, rng);
    }

    Tensor<S> forward(Graph<S>& g, Tensor<S> x, Tensor<S> ctx) const {
        const int H = x.dim(2), W = x.dim(3);
        Tensor<S> tokens = nchw_to_ntc(g, norm.forward(g, x));  // [B,T,C]
        Tensor<S> q = to_q.forward(g, tokens);
        Tensor<S> k = to_k.forward(g, ctx);  // [B,S,C]
        Tensor<S> v = to_v.forward(g, ctx);
        Tensor<S> scores = scale(g, bmm_nt(g, q, k), 1.0 / std::sqrt(double(channels)));
        Tensor<S> attn = softmax_last(g, scores);          // [B,T,S]
        Tensor<S> mixed = to_out.forward(g, bmm_nn(g, attn, v));
        return add(g, x, ntc_to_nchw(g, mixed, H, W));
    }

    void params(ParamList<S>& out, const std::string& prefix) const {
        norm.params(out, prefix + ".norm");
        to_q.params(out, prefix + ".q");
        to_k.params(out, prefix + ".k");
        to_v.params(out, prefix + ".v");
        to_out.params(out, prefix + ".out");
    }
};

// GN -> SiLU -> conv -> +time -> GN -> SiLU -> conv, with projected residual.
template <typename S>
struct ResBlock {
    GroupNorm<S> norm1, norm2;
    Conv2d<S> conv1, conv2;
    Linear<S> time_proj;  // [time_dim -> out_channels]
    Conv2d<S> skip;       // 1x1, only when channel counts differ
    bool has_skip = false;

    void init(int in, int out, int time_dim, int groups, odgen::Rng& rng) {
        norm1.init(in, groups);
        conv1.init(in, out, 3, 1, 1, rng, std::sqrt(2.0));
        time_proj.init(time_dim, out, rng);
        norm2.init(out, groups);
        conv2.init(out, out, 3, 1, 1, rng, std::sqrt(2.0));
        has_skip = (in != out);
        if (has_skip) skip.init(in, out, 1, 1, 0, rng);
    }

    Tensor<S> forward(Graph<S>& g, Tensor<S> x, Tensor<S> temb) const {
        Tensor<S> h = conv1.forward(g, silu(g, norm1.forward(g, x)));
        h = add_bc11(g, h, time_proj.forward(g, silu(g, temb)));
        h = conv2.forward(g, silu(g, norm2.forward(g, h)));
        Tensor<S> res = has_skip ? skip.forward(g, x) : x;
        return add(g, h, res);
    }

    void params(ParamList<S>& out, const std::string& prefix) const {
        norm1.params(out, prefix + ".norm1");
        conv1.params(out, prefix + ".conv1");
        time_proj.params(out, prefix + ".time");
        norm2.params(out, prefix + ".norm2");
        conv2.params(out, prefix + ".conv2");
        if (has_skip) skip.params(out, prefix + ".skip");
    }
};

// Transformer-style sinusoidal embedding of an integer timestep.
template <typename S>
inline Tensor<S> sinusoidal_time_embedding(const std::vector<int>& steps, int dim) {
    const int half = dim / 2;
    Tensor<S> out = Tensor<S>::zeros({static_cast<int>(steps.size()), dim});
    for (size_t b = 0; b < steps.size(); ++b) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
            out.val()[b * dim + i] = static_cast<S>(std::sin(steps[b] * freq));
            out.val()[b * dim + half + i] = static_cast<S>(std::cos(steps[b] * freq));
        }
    }
    return out;
}

}  // namespace odgen::nn
