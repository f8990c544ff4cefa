#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "odgen/cond/conditioning.hpp"
#include "odgen/cond/embedder.hpp"
#include "odgen/diffusion/losses.hpp"
#include "odgen/diffusion/model.hpp"

namespace odgen {

nlohmann::json denoiser_config_to_json(const DenoiserConfig& cfg);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

// Denoiser plus its (frozen) text embedder and checkpoint plumbing.
struct GenerativeModel {
    DenoiserConfig cfg;
    Denoiser<float> net;
    std::unique_ptr<HashEmbedder> embedder;

    void init(const DenoiserConfig& config, uint64_t seed);

    // [B, L, D] embedding of one prompt per batch row
    nn::Tensor<float> prompt_context(const std::vector<std::string>& prompts) const;
    // [B, N, L, D] stacked text-list embeddings
    nn::Tensor<float> text_stack(const std::vector<TextList>& lists) const;
    // [B, 3N, H, W] channel-concatenated image lists
    nn::Tensor<float> image_lists_tensor(const std::vector<ImageList>& lists) const;

    nn::ParamList<float> checkpoint_params() const;
    void save(const std::string& path, const nlohmann::json& extra_meta) const;
    static GenerativeModel load(const std::string& path);
};

int64_t count_params(const nn::ParamList<float>& params);

}  // namespace odgen
