#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "odgen/core/error.hpp"

namespace odgen {

// Axis-aligned box, top-left corner + size, in pixels. Real-valued; rounding
// to the pixel grid happens only at rasterization.
struct BBox {
    double x = 0.0;  // left edge
    double y = 0.0;  // top edge
    double w = 0.0;
    double h = 0.0;

    double x2() const { return x + w; }
    double y2() const { return y + h; }
    double area() const { return w * h; }
    // Aspect ratio is width over height everywhere in this codebase.
    double ratio() const { return w / h; }
};

struct Annotation {
    int category_id = 0;
    BBox bbox;
};

struct BoxGeometry {
    double area = 0.0;
    double ratio = 0.0;
};

inline BoxGeometry derive_geometry(const BBox& b) { return {b.area(), b.ratio()}; }

// Intersection of `b` with the image rectangle [0,width]x[0,height].
// Throws EmptyBoxError when the intersection has zero area.
inline BBox clip_bbox(const BBox& b, double width, double height) {
    const double x1 = std::max(0.0, b.x);
    const double y1 = std::max(0.0, b.y);
    const double x2 = std::min(width, b.x2());
    const double y2 = std::min(height, b.y2());
    if (x2 <= x1 || y2 <= y1) {
        throw EmptyBoxError(strfmt("box (%.3f,%.3f,%.3f,%.3f) is empty after clipping to %gx%g",
                                   b.x, b.y, b.w, b.h, width, height));
    }
    return {x1, y1, x2 - x1, y2 - y1};
}

inline double iou(const BBox& a, const BBox& b) {
    const double x1 = std::max(a.x, b.x);
    const double y1 = std::max(a.y, b.y);
    const double x2 = std::min(a.x2(), b.x2());
    const double y2 = std::min(a.y2(), b.y2());
    const double inter = std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// Half-open integer pixel range [lo, hi) covered by a box extent, rounded to
// the nearest pixel boundary and clamped to [0, size].
inline std::pair<int, int> pixel_range(double lo, double extent, int size) {
    int a = static_cast<int>(std::lround(lo));
    int b = static_cast<int>(std::lround(lo + extent));
    a = std::clamp(a, 0, size);
    b = std::clamp(b, 0, size);
    return {a, b};
}

}  // namespace odgen
