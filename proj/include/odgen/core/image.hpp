#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "odgen/core/bbox.hpp"

namespace odgen {

// 8-bit RGB image, HWC layout.
struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;  // height*width*3

    ImageU8() = default;
    ImageU8(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0) {}

    uint8_t* px(int y, int x) { return data.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const uint8_t* px(int y, int x) const {
        return data.data() + (static_cast<size_t>(y) * width + x) * 3;
    }
    bool empty() const { return data.empty(); }
};

// Planar float image, CHW layout. Model-side pixel domain is [-1, 1].
struct FloatImage {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;  // channels*height*width

    FloatImage() = default;
    FloatImage(int c, int h, int w)
        : channels(c), height(h), width(w), data(static_cast<size_t>(c) * h * w, 0.0f) {}

    float& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
};

ImageU8 load_png(const std::string& path);
void save_png(const ImageU8& img, const std::string& path);

// u8 [0,255] <-> float [-1,1]
FloatImage to_float(const ImageU8& img);
ImageU8 to_u8(const FloatImage& img);

FloatImage resize_bilinear(const FloatImage& src, int out_h, int out_w);
ImageU8 resize_bilinear(const ImageU8& src, int out_h, int out_w);

// Bilinear resample of the (real-valued) box region of `src` to out_h x out_w.
FloatImage crop_resize(const FloatImage& src, const BBox& box, int out_h, int out_w);
ImageU8 crop_resize(const ImageU8& src, const BBox& box, int out_h, int out_w);

}  // namespace odgen
