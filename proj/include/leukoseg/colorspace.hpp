#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "leukoseg/error.hpp"
#include "leukoseg/raster.hpp"

namespace leukoseg {

struct CmykPlanes {
    FloatPlane c, m, y, k;
};

struct LabPlanes {
    FloatPlane l, a, b;
};

struct Cmyk {
    double c, m, y, k;
};

struct Lab {
    double l, a, b;
};

namespace color_detail {

inline void require_rgb(const RasterImage& img, const char* op) {
    if (img.channels() != 3) {
        throw Error(ErrorCode::wrong_channel_count, std::string(op) + " needs a 3-channel image");
    }
}

inline double srgb_to_linear(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

} // namespace color_detail

/// Per-pixel RGB -> CMYK. Pure black (K = 1) yields C = M = Y = 0.
constexpr Cmyk rgb_to_cmyk(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double rn = r / 255.0;
    const double gn = g / 255.0;
    const double bn = b / 255.0;
    const double peak = std::max({rn, gn, bn});
    if (peak <= 0.0) return {0.0, 0.0, 0.0, 1.0};
    // (1 - x - K) / (1 - K) with 1 - K = peak; written this way it cannot leave [0,1] by rounding
    return {(peak - rn) / peak, (peak - gn) / peak, (peak - bn) / peak, 1.0 - peak};
}

inline CmykPlanes rgb_to_cmyk(const RasterImage& img) {
    color_detail::require_rgb(img, "rgb_to_cmyk");
    const int w = img.width();
    const int h = img.height();
    CmykPlanes out{FloatPlane(w, h), FloatPlane(w, h), FloatPlane(w, h), FloatPlane(w, h)};
    const auto px = img.data();
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const auto v = rgb_to_cmyk(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
        out.c[i] = v.c;
        out.m[i] = v.m;
        out.y[i] = v.y;
        out.k[i] = v.k;
    }
    return out;
}

/// Quantizes a [0,1] plane to 8 bits with round-half-up.
inline RasterImage cmyk_plane_to_gray(const FloatPlane& plane) {
    RasterImage img(plane.width(), plane.height(), 1);
    auto dst = img.data();
    for (std::size_t i = 0; i < plane.size(); ++i) {
        const double s = plane[i];
        if (!(s >= 0.0 && s <= 1.0)) {
            throw Error(ErrorCode::out_of_range, "cmyk sample outside [0,1]");
        }
        dst[i] = static_cast<std::uint8_t>(std::floor(255.0 * s + 0.5));
    }
    return img;
}

/// sRGB (D65) -> CIE L*a*b*.
inline Lab rgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    using color_detail::lab_f;
    using color_detail::srgb_to_linear;
    const double rl = srgb_to_linear(r / 255.0);
    const double gl = srgb_to_linear(g / 255.0);
    const double bl = srgb_to_linear(b / 255.0);

    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;

    constexpr double xn = 0.95047;
    constexpr double yn = 1.0;
    constexpr double zn = 1.08883;
    const double fx = lab_f(x / xn);
    const double fy = lab_f(y / yn);
    const double fz = lab_f(z / zn);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline LabPlanes rgb_to_lab(const RasterImage& img) {
    color_detail::require_rgb(img, "rgb_to_lab");
    const int w = img.width();
    const int h = img.height();
    LabPlanes out{FloatPlane(w, h), FloatPlane(w, h), FloatPlane(w, h)};
    const auto px = img.data();
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const auto v = rgb_to_lab(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
        out.l[i] = v.l;
        out.a[i] = v.a;
        out.b[i] = v.b;
    }
    return out;
}

/// BT.601 luma, rounded half-up in exact integer arithmetic.
constexpr std::uint8_t rgb_to_gray(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

inline RasterImage rgb_to_gray(const RasterImage& img) {
    color_detail::require_rgb(img, "rgb_to_gray");
    RasterImage out(img.width(), img.height(), 1);
    const auto px = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        dst[i] = rgb_to_gray(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    }
    return out;
}

/// Maps a real plane to 8 bits by `round(value + offset)` clamped to [0,255].
/// With offset 128 this is the usual 8-bit encoding of a* and b*.
inline RasterImage quantize_plane(const FloatPlane& plane, double scale, double offset) {
    RasterImage img(plane.width(), plane.height(), 1);
    auto dst = img.data();
    for (std::size_t i = 0; i < plane.size(); ++i) {
        const double v = std::floor(plane[i] * scale + offset + 0.5);
        dst[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return img;
}

} // namespace leukoseg
