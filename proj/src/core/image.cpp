#include "odgen/core/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "odgen/core/error.hpp"

namespace odgen {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

ImageU8 load_png(const std::string& path) {
    FilePtr fp(fopen(path.c_str(), "rb"));
    if (!fp) {
        throw IoError("cannot open " + path);
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    // normalize everything to 8-bit RGB
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    ImageU8 img(static_cast<int>(png_get_image_height(png, info)),
                static_cast<int>(png_get_image_width(png, info)));
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) {
        rows[y] = img.px(y, 0);
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const ImageU8& img, const std::string& path) {
    FilePtr fp(fopen(path.c_str(), "wb"));
    if (!fp) {
        throw IoError("cannot write " + path);
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) {
        rows[y] = const_cast<png_bytep>(img.px(y, 0));
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

FloatImage to_float(const ImageU8& img) {
    FloatImage out(3, img.height, img.width);
    const size_t hw = static_cast<size_t>(img.height) * img.width;
    for (size_t i = 0; i < hw; ++i) {
        for (int c = 0; c < 3; ++c) {
            out.data[c * hw + i] = static_cast<float>(img.data[i * 3 + c]) / 127.5f - 1.0f;
        }
    }
    return out;
}

ImageU8 to_u8(const FloatImage& img) {
    ImageU8 out(img.height, img.width);
    const size_t hw = static_cast<size_t>(img.height) * img.width;
    for (size_t i = 0; i < hw; ++i) {
        for (int c = 0; c < 3; ++c) {
            float v = (std::clamp(img.data[c * hw + i], -1.0f, 1.0f) + 1.0f) * 127.5f;
            out.data[i * 3 + c] = static_cast<uint8_t>(std::lround(v));
        }
    }
    return out;
}

namespace {

// Samples src at continuous coordinates with the half-pixel-center convention
// (the align_corners=false behavior common to image libraries).
float sample_bilinear(const FloatImage& src, int c, double sy, double sx) {
    const double fy = sy - 0.5;
    const double fx = sx - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const int x0 = static_cast<int>(std::floor(fx));
    const double dy = fy - y0;
    const double dx = fx - x0;
    auto at = [&](int y, int x) {
        y = std::clamp(y, 0, src.height - 1);
        x = std::clamp(x, 0, src.width - 1);
        return static_cast<double>(src.at(c, y, x));
    };
    const double top = at(y0, x0) * (1.0 - dx) + at(y0, x0 + 1) * dx;
    const double bot = at(y0 + 1, x0) * (1.0 - dx) + at(y0 + 1, x0 + 1) * dx;
    return static_cast<float>(top * (1.0 - dy) + bot * dy);
}

}  // namespace

FloatImage crop_resize(const FloatImage& src, const BBox& box, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0 || box.w <= 0.0 || box.h <= 0.0) {
        throw EmptyBoxError("crop_resize: empty source box or target size");
    }
    FloatImage out(src.channels, out_h, out_w);
    const double sy = box.h / out_h;
    const double sx = box.w / out_w;
    for (int c = 0; c < src.channels; ++c) {
        for (int y = 0; y < out_h; ++y) {
            for (int x = 0; x < out_w; ++x) {
                out.at(c, y, x) = sample_bilinear(src, c, box.y + (y + 0.5) * sy, box.x + (x + 0.5) * sx);
            }
        }
    }
    return out;
}

FloatImage resize_bilinear(const FloatImage& src, int out_h, int out_w) {
    return crop_resize(src, {0.0, 0.0, static_cast<double>(src.width), static_cast<double>(src.height)},
                       out_h, out_w);
}

ImageU8 resize_bilinear(const ImageU8& src, int out_h, int out_w) {
    return to_u8(resize_bilinear(to_float(src), out_h, out_w));
}

ImageU8 crop_resize(const ImageU8& src, const BBox& box, int out_h, int out_w) {
    return to_u8(crop_resize(to_float(src), box, out_h, out_w));
}

}  // namespace odgen
