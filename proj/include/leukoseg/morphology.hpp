#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "leukoseg/error.hpp"
#include "leukoseg/raster.hpp"

namespace leukoseg {

struct Offset {
    int dx;
    int dy;
    friend bool operator==(const Offset&, const Offset&) = default;
};

enum class ElementShape { square, ellipse };

/// Flat, origin-symmetric structuring element.
class StructuringElement {
  public:
    StructuringElement(ElementShape shape, int radius) : shape_(shape), radius_(radius) {
        if (radius < 1) throw Error(ErrorCode::invalid_argument, "structuring element radius must be >= 1");
        for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                // disk test against (r + 1/2)^2 gives rounder small disks than r^2
                if (shape == ElementShape::square || dx * dx + dy * dy <= radius * radius + radius) {
                    offsets_.push_back({dx, dy});
                }
            }
        }
    }

    static StructuringElement square(int radius) { return {ElementShape::square, radius}; }
    static StructuringElement ellipse(int radius) { return {ElementShape::ellipse, radius}; }

    ElementShape shape() const noexcept { return shape_; }
    int radius() const noexcept { return radius_; }
    const std::vector<Offset>& offsets() const noexcept { return offsets_; }

  private:
    ElementShape shape_;
    int radius_;
    std::vector<Offset> offsets_;
};

namespace morph_detail {

// Binary dilation/erosion on a plane; samples outside the plane read as false.
inline BinaryMask dilate_raw(const BinaryMask& in, const StructuringElement& se) {
    BinaryMask out(in.width(), in.height());
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < in.width(); ++x) {
            if (!in(x, y)) continue;
            for (const auto& o : se.offsets()) {
                const int nx = x + o.dx;
                const int ny = y + o.dy;
                if (in.contains(nx, ny)) out(nx, ny) = 1;
            }
        }
    }
    return out;
}

inline BinaryMask erode_raw(const BinaryMask& in, const StructuringElement& se) {
    BinaryMask out(in.width(), in.height());
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < in.width(); ++x) {
            bool keep = in(x, y) != 0;
            for (std::size_t i = 0; keep && i < se.offsets().size(); ++i) {
                const auto& o = se.offsets()[i];
                const int nx = x + o.dx;
                const int ny = y + o.dy;
                keep = in.contains(nx, ny) && in(nx, ny);
            }
            out(x, y) = keep;
        }
    }
    return out;
}

inline BinaryMask pad(const BinaryMask& in, int margin) {
    BinaryMask out(in.width() + 2 * margin, in.height() + 2 * margin);
    for (int y = 0; y < in.height(); ++y)
        for (int x = 0; x < in.width(); ++x) out(x + margin, y + margin) = in(x, y);
    return out;
}

inline BinaryMask crop(const BinaryMask& in, int margin, int width, int height) {
    BinaryMask out(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) out(x, y) = in(x + margin, y + margin);
    return out;
}

} // namespace morph_detail

/// Dilation with everything outside the frame treated as background.
inline BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
    return morph_detail::dilate_raw(mask, se);
}

/// Erosion with everything outside the frame treated as background, so
/// pixels whose element pokes past the border are removed.
inline BinaryMask erode(const BinaryMask& mask, const StructuringElement& se) {
    return morph_detail::erode_raw(mask, se);
}

/// Closing of the mask embedded in an unbounded background plane, cropped
/// back to the frame. Working in a padded frame keeps the dilated set that
/// spills past the border, which makes the result extensive and idempotent.
inline BinaryMask close(const BinaryMask& mask, const StructuringElement& se) {
    const int margin = se.radius();
    auto padded = morph_detail::pad(mask, margin);
    padded = morph_detail::erode_raw(morph_detail::dilate_raw(padded, se), se);
    return morph_detail::crop(padded, margin, mask.width(), mask.height());
}

/// Opening, the dual of `close`.
inline BinaryMask open(const BinaryMask& mask, const StructuringElement& se) {
    return dilate(erode(mask, se), se);
}

inline BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b, "mask_and");
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i];
    return out;
}

inline BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b, "mask_or");
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] || b[i];
    return out;
}

inline BinaryMask mask_not(const BinaryMask& a) {
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = !a[i];
    return out;
}

/// a AND NOT b
inline BinaryMask mask_diff(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b, "mask_diff");
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && !b[i];
    return out;
}

} // namespace leukoseg
