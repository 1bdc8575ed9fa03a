#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>

#include "leukoseg/error.hpp"
#include "leukoseg/raster.hpp"

namespace leukoseg {

struct Histogram256 {
    std::array<std::uint64_t, 256> bins{};

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (auto b : bins) n += b;
        return n;
    }
};

namespace hist_detail {
inline void require_gray(const RasterImage& img, const char* op) {
    if (img.channels() != 1) {
        throw Error(ErrorCode::wrong_channel_count, std::string(op) + " needs a 1-channel image");
    }
}
} // namespace hist_detail

/// Histogram of a gray image, optionally restricted to `domain`.
inline Histogram256 histogram(const RasterImage& img, const BinaryMask* domain = nullptr) {
    hist_detail::require_gray(img, "histogram");
    if (domain && (domain->width() != img.width() || domain->height() != img.height())) {
        throw Error(ErrorCode::dimension_mismatch, "histogram domain");
    }
    Histogram256 h;
    const auto px = img.data();
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (!domain || (*domain)[i]) ++h.bins[px[i]];
    }
    return h;
}

/// Classic CDF remap; constant images come back unchanged.
inline RasterImage equalize_histogram(const RasterImage& img) {
    hist_detail::require_gray(img, "equalize_histogram");
    const auto h = histogram(img);
    const std::uint64_t n = img.pixel_count();

    std::array<std::uint64_t, 256> cdf{};
    std::uint64_t run = 0;
    std::uint64_t cdf_min = 0;
    for (int v = 0; v < 256; ++v) {
        run += h.bins[v];
        cdf[v] = run;
        if (cdf_min == 0 && run > 0) cdf_min = run;
    }
    if (cdf_min == n) return img;

    std::array<std::uint8_t, 256> lut{};
    const std::uint64_t span = n - cdf_min;
    for (int v = 0; v < 256; ++v) {
        const std::uint64_t num = cdf[v] > cdf_min ? cdf[v] - cdf_min : 0;
        // round(255 * num / span), half up
        lut[v] = static_cast<std::uint8_t>((2 * 255 * num + span) / (2 * span));
    }
    RasterImage out = img;
    for (auto& p : out.data()) p = lut[p];
    return out;
}

/// Nearest-rank percentile: the sample at sorted index round-down/up of p*(N-1).
inline std::uint8_t percentile_value(const Histogram256& h, double p, bool round_up) {
    const std::uint64_t n = h.total();
    if (n == 0) return 0;
    const double pos = p * static_cast<double>(n - 1);
    const auto rank = static_cast<std::uint64_t>(round_up ? std::ceil(pos) : std::floor(pos));
    std::uint64_t run = 0;
    for (int v = 0; v < 256; ++v) {
        run += h.bins[v];
        if (run > rank) return static_cast<std::uint8_t>(v);
    }
    return 255;
}

struct StretchResult {
    RasterImage image;
    bool degenerate = false;
    std::uint8_t low_value = 0;
    std::uint8_t high_value = 0;
};

/// Linear stretch of [low-percentile value, high-percentile value] onto [0,255].
/// Percentiles are taken over `domain` when given; every pixel is remapped.
inline StretchResult stretch_contrast(const RasterImage& img, double low, double high,
                                      const BinaryMask* domain = nullptr) {
    hist_detail::require_gray(img, "stretch_contrast");
    if (!(low >= 0.0 && low < high && high <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "invalid-percentile-order: need 0 <= low < high <= 1");
    }
    const auto h = histogram(img, domain);
    const auto lo = percentile_value(h, low, false);
    const auto hi = percentile_value(h, high, true);
    StretchResult result{RasterImage(img.width(), img.height(), 1), false, lo, hi};
    if (lo >= hi) {
        result.degenerate = true;
        return result;
    }
    std::array<std::uint8_t, 256> lut{};
    const unsigned span = hi - lo;
    for (unsigned v = 0; v < 256; ++v) {
        if (v <= lo) {
            lut[v] = 0;
        } else if (v >= hi) {
            lut[v] = 255;
        } else {
            lut[v] = static_cast<std::uint8_t>((2 * 255 * (v - lo) + span) / (2 * span));
        }
    }
    const auto src = img.data();
    auto dst = result.image.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = lut[src[i]];
    return result;
}

/// Otsu threshold over the split {<= t} / {> t}; ties go to the smallest t.
/// A histogram with a single occupied bin returns that bin.
inline std::uint8_t otsu_threshold(const Histogram256& h) {
    std::uint64_t n = 0;
    long double sum = 0;
    int occupied = 0;
    int only = 0;
    for (int v = 0; v < 256; ++v) {
        n += h.bins[v];
        sum += static_cast<long double>(v) * h.bins[v];
        if (h.bins[v]) {
            ++occupied;
            only = v;
        }
    }
    if (occupied <= 1) return static_cast<std::uint8_t>(only);

    // sigma_b^2 * N^2 = (N*S0 - n0*S)^2 / (n0*n1); the common factor is dropped
    long double best = -1;
    int best_t = 0;
    std::uint64_t n0 = 0;
    long double s0 = 0;
    for (int t = 0; t < 255; ++t) {
        n0 += h.bins[t];
        s0 += static_cast<long double>(t) * h.bins[t];
        const std::uint64_t n1 = n - n0;
        long double score = 0;
        if (n0 > 0 && n1 > 0) {
            const long double d = static_cast<long double>(n) * s0 - static_cast<long double>(n0) * sum;
            score = d * d / (static_cast<long double>(n0) * static_cast<long double>(n1));
        }
        if (score > best) {
            best = score;
            best_t = t;
        }
    }
    return static_cast<std::uint8_t>(best_t);
}

inline std::uint8_t otsu_threshold(const RasterImage& img, const BinaryMask* domain = nullptr) {
    return otsu_threshold(histogram(img, domain));
}

enum class Polarity { above, below };

/// above: v > t, below: v <= t.
inline BinaryMask threshold(const RasterImage& img, std::uint8_t t, Polarity polarity) {
    hist_detail::require_gray(img, "threshold");
    BinaryMask mask(img.width(), img.height());
    const auto px = img.data();
    for (std::size_t i = 0; i < px.size(); ++i) {
        mask[i] = polarity == Polarity::above ? px[i] > t : px[i] <= t;
    }
    return mask;
}

} // namespace leukoseg
