#include "odgen/cond/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "odgen/core/error.hpp"
#include "odgen/core/log.hpp"

namespace fs = std::filesystem;

namespace odgen {

int TextList::object_count() const {
    int n = 0;
    for (const auto& e : entries) {
        if (!e.empty()) ++n;
    }
    return n;
}

const ImageU8& ForegroundPool::sample(int category, Rng& rng) const {
    if (category < 0 || category >= num_categories() || images_[category].empty()) {
        throw PoolMissError(strfmt("foreground pool has no images for category %d", category));
    }
    const auto& bucket = images_[category];
    return bucket[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(bucket.size()) - 1))];
}

void ForegroundPool::save(const std::string& root,
                          const std::vector<std::string>& categories) const {
    if (categories.size() != images_.size()) {
        throw ShapeMismatchError("pool/category count mismatch");
    }
    for (size_t c = 0; c < images_.size(); ++c) {
        const fs::path dir = fs::path(root) / categories[c];
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create pool directory " + dir.string());
        for (size_t i = 0; i < images_[c].size(); ++i) {
            save_png(images_[c][i], (dir / strfmt("%04zu.png", i)).string());
        }
    }
}

ForegroundPool ForegroundPool::load(const std::string& root,
                                    const std::vector<std::string>& categories) {
    ForegroundPool pool(static_cast<int>(categories.size()));
    for (size_t c = 0; c < categories.size(); ++c) {
        const fs::path dir = fs::path(root) / categories[c];
        if (!fs::is_directory(dir)) continue;
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".png") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) pool.add(static_cast<int>(c), load_png(f.string()));
    }
    return pool;
}

TextList build_text_list(const PseudoLabel& pseudo, const std::vector<std::string>& categories,
                         int n) {
    if (static_cast<int>(pseudo.annotations.size()) > n) {
        throw OverflowError(strfmt("%zu annotations exceed the %d condition slots",
                                   pseudo.annotations.size(), n));
    }
    TextList list;
    list.entries.assign(static_cast<size_t>(n), "");
    for (size_t i = 0; i < pseudo.annotations.size(); ++i) {
        list.entries[i] = "a " + categories.at(pseudo.annotations[i].category_id);
    }
    return list;
}

std::string build_global_prompt(const PseudoLabel& pseudo,
                                const std::vector<std::string>& categories,
                                const std::string& scene_name) {
    std::vector<std::string> names;
    std::set<int> seen;
    for (const auto& ann : pseudo.annotations) {
        if (seen.insert(ann.category_id).second) {
            names.push_back(categories.at(ann.category_id));
        }
    }
    if (names.empty()) {
        return "a " + scene_name;
    }
    std::string prompt;
    for (size_t i = 0; i < names.size(); ++i) {
        if (i > 0) prompt += " and ";
        prompt += "a " + names[i];
    }
    prompt += " in a " + scene_name;
    return prompt;
}

FloatImage paste_on_canvas(const FloatImage& patch, const BBox& box, int height, int width) {
    if (patch.channels != 3 || patch.height <= 0 || patch.width <= 0) {
        throw EmptyBoxError("paste_on_canvas: empty patch");
    }
    const auto [x0, x1] = pixel_range(box.x, box.w, width);
    const auto [y0, y1] = pixel_range(box.y, box.h, height);
    const int rw = x1 - x0;
    const int rh = y1 - y0;
    if (rw <= 0 || rh <= 0) {
        throw EmptyBoxError("paste_on_canvas: box rounds to zero pixels");
    }
    FloatImage canvas(3, height, width);
    const FloatImage resized = resize_bilinear(patch, rh, rw);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < rh; ++y) {
            for (int x = 0; x < rw; ++x) {
                canvas.at(c, y0 + y, x0 + x) = resized.at(c, y, x);
            }
        }
    }
    return canvas;
}

ImageList build_image_list(const PseudoLabel& pseudo, const ForegroundPool& pool, int n,
                           Rng& rng) {
    if (static_cast<int>(pseudo.annotations.size()) > n) {
        throw OverflowError(strfmt("%zu annotations exceed the %d condition slots",
                                   pseudo.annotations.size(), n));
    }
    ImageList list;
    list.canvases.reserve(static_cast<size_t>(n));
    for (const auto& ann : pseudo.annotations) {
        const ImageU8& patch = pool.sample(ann.category_id, rng);
        list.canvases.push_back(
            paste_on_canvas(to_float(patch), ann.bbox, pseudo.height, pseudo.width));
    }
    while (static_cast<int>(list.canvases.size()) < n) {
        list.canvases.emplace_back(3, pseudo.height, pseudo.width);
    }
    return list;
}

FloatImage boxes_to_mask(const std::vector<Annotation>& annotations, int height, int width,
                         int num_categories) {
    FloatImage mask(num_categories, height, width);
    for (const auto& ann : annotations) {
        const auto [x0, x1] = pixel_range(ann.bbox.x, ann.bbox.w, width);
        const auto [y0, y1] = pixel_range(ann.bbox.y, ann.bbox.h, height);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                mask.at(ann.category_id, y, x) += 1.0f;
            }
        }
    }
    return mask;
}

FloatImage rasterize_foreground_mask(const std::vector<Annotation>& annotations, int src_height,
                                     int src_width, int dst_height, int dst_width) {
    FloatImage mask(1, dst_height, dst_width);
    const double sx = static_cast<double>(dst_width) / src_width;
    const double sy = static_cast<double>(dst_height) / src_height;
    for (const auto& ann : annotations) {
        // outward rounding keeps every partially covered pixel in the mask
        const int x0 = std::clamp(static_cast<int>(std::floor(ann.bbox.x * sx)), 0, dst_width);
        const int x1 = std::clamp(static_cast<int>(std::ceil(ann.bbox.x2() * sx)), 0, dst_width);
        const int y0 = std::clamp(static_cast<int>(std::floor(ann.bbox.y * sy)), 0, dst_height);
        const int y1 = std::clamp(static_cast<int>(std::ceil(ann.bbox.y2() * sy)), 0, dst_height);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                mask.at(0, y, x) = 1.0f;
            }
        }
    }
    return mask;
}

std::array<int, 4> image_encoder_channels(int n) {
    static const std::map<int, std::array<int, 4>> presets = {
        {2, {16, 32, 96, 256}},    {6, {32, 96, 128, 256}},  {17, {64, 96, 128, 256}},
        {19, {64, 96, 128, 256}},  {27, {96, 128, 192, 256}}, {56, {168, 192, 224, 256}},
        {79, {237, 256, 256, 256}}, {93, {297, 256, 256, 256}},
    };
    if (auto it = presets.find(n); it != presets.end()) {
        return it->second;
    }
    static const int ladder[] = {16, 32, 64, 96, 128, 168, 192, 224, 237, 256, 297};
    const int want = std::max(16, 3 * n);
    std::array<int, 4> ch{};
    int idx = 0;
    while (idx < static_cast<int>(std::size(ladder)) && ladder[idx] < want) ++idx;
    ch[0] = idx < static_cast<int>(std::size(ladder)) ? ladder[idx] : 3 * n;
    for (int layer = 1; layer < 3; ++layer) {
        ++idx;
        ch[layer] = idx < static_cast<int>(std::size(ladder)) ? std::min(ladder[idx], 256) : 256;
    }
    ch[3] = 256;
    return ch;
}

std::array<int, 4> text_encoder_channels(int n) {
    return {std::max(1, n / 2), std::max(1, n / 4), std::max(1, n / 8), 1};
}

}  // namespace odgen
