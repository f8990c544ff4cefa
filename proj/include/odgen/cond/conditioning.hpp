#pragma once

#include <array>
#include <string>
#include <vector>

#include "odgen/core/dataset.hpp"
#include "odgen/core/image.hpp"
#include "odgen/core/rng.hpp"
#include "odgen/stats/layout_stats.hpp"

namespace odgen {

// Fixed-length list of per-object prompts, "" in padding slots. Non-empty
// entries come first and are index-aligned with the image list.
struct TextList {
    std::vector<std::string> entries;  // exactly N
    int object_count() const;
};

// Fixed-length list of canvases; canvas i carries object i's patch resized
// into its box, zeros elsewhere. Padding canvases are all-zero.
struct ImageList {
    std::vector<FloatImage> canvases;  // exactly N, each 3 x H x W
};

struct ConditionTriplet {
    ImageList image_list;
    TextList text_list;
    std::string global_prompt;
};

// Per-category library of synthesized object images used to stamp canvases.
class ForegroundPool {
public:
    explicit ForegroundPool(int num_categories = 0) : images_(num_categories) {}

    int num_categories() const { return static_cast<int>(images_.size()); }
    int count(int category) const { return static_cast<int>(images_.at(category).size()); }
    void add(int category, ImageU8 image) { images_.at(category).push_back(std::move(image)); }
    // Throws PoolMissError when the category has no entries.
    const ImageU8& sample(int category, Rng& rng) const;

    // Directory layout: <root>/<classname>/<index>.png
    void save(const std::string& root, const std::vector<std::string>& categories) const;
    static ForegroundPool load(const std::string& root, const std::vector<std::string>& categories);

private:
    std::vector<std::vector<ImageU8>> images_;
};

// "a <classname>" per object, padded with "" to length n.
TextList build_text_list(const PseudoLabel& pseudo, const std::vector<std::string>& categories,
                         int n);

// Distinct class names in first-occurrence order joined with " and ",
// followed by "in a <scene>"; just "a <scene>" when there are no objects.
std::string build_global_prompt(const PseudoLabel& pseudo,
                                const std::vector<std::string>& categories,
                                const std::string& scene_name);

// Zero canvas with the patch resized (bilinear) into the rounded box region.
FloatImage paste_on_canvas(const FloatImage& patch, const BBox& box, int height, int width);

// One canvas per annotation with a pool patch of its category, padded with
// all-zero canvases to n.
ImageList build_image_list(const PseudoLabel& pseudo, const ForegroundPool& pool, int n, Rng& rng);

// Count mask sized K x H x W: each box of class k increments its half-open
// rounded pixel rectangle in channel k.
FloatImage boxes_to_mask(const std::vector<Annotation>& annotations, int height, int width,
                         int num_categories);

// Binary union mask at the loss resolution; boxes are scaled from the source
// image size and rounded outward.
FloatImage rasterize_foreground_mask(const std::vector<Annotation>& annotations, int src_height,
                                     int src_width, int dst_height, int dst_width);

// Output channels of the 4 image-encoder conv layers for condition length n.
// Known rows are exact presets; other n use the documented ladder rule
// (first layer >= max(16, 3n), then the next ladder values, final always 256).
std::array<int, 4> image_encoder_channels(int n);

// max(1, n/2), max(1, n/4), max(1, n/8), 1
std::array<int, 4> text_encoder_channels(int n);

}  // namespace odgen
