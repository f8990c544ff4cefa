#pragma once

#include <array>

#include "odgen/cond/conditioning.hpp"
#include "odgen/cond/embedder.hpp"
#include "odgen/nn/module.hpp"

namespace odgen {

// Encodes the channel-concatenated image list [B, 3N, H, W] down to
// [B, 256, H/8, W/8]: four 3x3 convs, strides 2/2/2/1, SiLU between layers.
template <typename S>
struct ImageListEncoder {
    std::array<nn::Conv2d<S>, 4> convs;
    std::array<int, 4> channels{};
    int n = 0;

    void init(int n_, odgen::Rng& rng, const std::array<int, 4>* channels_override = nullptr) {
        n = n_;
        channels = channels_override ? *channels_override : image_encoder_channels(n_);
        const int strides[4] = {2, 2, 2, 1};
        int in = 3 * n_;
        for (int i = 0; i < 4; ++i) {
            convs[i].init(in, channels[i], 3, strides[i], 1, rng, std::sqrt(2.0));
            in = channels[i];
        }
    }

    nn::Tensor<S> forward(nn::Graph<S>& g, nn::Tensor<S> x) const {
        if (x.ndim() != 4 || x.dim(1) != 3 * n) {
            throw ShapeMismatchError(
                strfmt("image list encoder expects %d channels, got %d", 3 * n,
                       x.ndim() == 4 ? x.dim(1) : -1));
        }
        nn::Tensor<S> h = x;
        for (int i = 0; i < 4; ++i) {
            h = convs[i].forward(g, h);
            if (i + 1 < 4) h = nn::silu(g, h);
        }
        return h;
    }

    void params(nn::ParamList<S>& out, const std::string& prefix) const {
        for (int i = 0; i < 4; ++i) convs[i].params(out, prefix + strfmt(".conv%d", i));
    }
};

// Fuses the stack of per-object text embeddings [B, N, L, D] into one
// [B, 1, L, D] embedding: four 3x3 stride-1 convs over the object axis with
// channel progression max(1,N/2), max(1,N/4), max(1,N/8), 1.
template <typename S>
struct TextListEncoder {
    std::array<nn::Conv2d<S>, 4> convs;
    std::array<int, 4> channels{};
    int n = 0;

    void init(int n_, odgen::Rng& rng) {
        n = n_;
        channels = text_encoder_channels(n_);
        int in = n_;
        for (int i = 0; i < 4; ++i) {
            convs[i].init(in, channels[i], 3, 1, 1, rng, std::sqrt(2.0));
            in = channels[i];
        }
    }

    nn::Tensor<S> forward(nn::Graph<S>& g, nn::Tensor<S> stacked) const {
        if (stacked.ndim() != 4 || stacked.dim(1) != n) {
            throw ShapeMismatchError("text list encoder: bad stacked embedding shape");
        }
        nn::Tensor<S> h = stacked;
        for (int i = 0; i < 4; ++i) {
            h = convs[i].forward(g, h);
            if (i + 1 < 4) h = nn::silu(g, h);
        }
        return h;
    }

    void params(nn::ParamList<S>& out, const std::string& prefix) const {
        for (int i = 0; i < 4; ++i) convs[i].params(out, prefix + strfmt(".conv%d", i));
    }
};

// Embeds each text-list slot and stacks to [B=1, N, L, D]; validates the
// embedder output shape.
template <typename S>
nn::Tensor<S> stack_text_list(const TextList& list, const TextEmbedder& embedder) {
    const int n = static_cast<int>(list.entries.size());
    const int l = embedder.rows();
    const int d = embedder.dim();
    nn::Tensor<S> out = nn::Tensor<S>::zeros({1, n, l, d});
    for (int i = 0; i < n; ++i) {
        const std::vector<float> e = embedder.embed(list.entries[static_cast<size_t>(i)]);
        if (static_cast<int>(e.size()) != l * d) {
            throw BadEmbedderShapeError(strfmt("embedder returned %zu values, expected %d x %d",
                                               e.size(), l, d));
        }
        for (int j = 0; j < l * d; ++j) {
            out.val()[static_cast<int64_t>(i) * l * d + j] = static_cast<S>(e[j]);
        }
    }
    return out;
}

// Embeds a single prompt to [B=1, L, D].
template <typename S>
nn::Tensor<S> embed_prompt(const std::string& prompt, const TextEmbedder& embedder) {
    const int l = embedder.rows();
    const int d = embedder.dim();
    const std::vector<float> e = embedder.embed(prompt);
    if (static_cast<int>(e.size()) != l * d) {
        throw BadEmbedderShapeError("embedder output does not match its declared shape");
    }
    nn::Tensor<S> out = nn::Tensor<S>::zeros({1, l, d});
    for (int j = 0; j < l * d; ++j) out.val()[j] = static_cast<S>(e[j]);
    return out;
}

// Channel-concatenates the image list to [B=1, 3N, H, W].
template <typename S>
nn::Tensor<S> image_list_to_tensor(const ImageList& list) {
    if (list.canvases.empty()) {
        throw ShapeMismatchError("image list has no canvases");
    }
    const int h = list.canvases[0].height;
    const int w = list.canvases[0].width;
    const int n = static_cast<int>(list.canvases.size());
    nn::Tensor<S> out = nn::Tensor<S>::zeros({1, 3 * n, h, w});
    for (int i = 0; i < n; ++i) {
        const FloatImage& canvas = list.canvases[static_cast<size_t>(i)];
        if (canvas.channels != 3 || canvas.height != h || canvas.width != w) {
            throw ShapeMismatchError("image list canvases have non-uniform sizes");
        }
        std::transform(canvas.data.begin(), canvas.data.end(),
                       out.val() + static_cast<int64_t>(i) * 3 * h * w,
                       [](float v) { return static_cast<S>(v); });
    }
    return out;
}

}  // namespace odgen
