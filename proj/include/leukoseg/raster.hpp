#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "leukoseg/error.hpp"

namespace leukoseg {

/// Interleaved 8-bit raster with 1 or 3 channels, row-major.
class RasterImage {
  public:
    RasterImage() = default;

    RasterImage(int width, int height, int channels, std::uint8_t fill = 0)
        : width_(width), height_(height), channels_(channels) {
        validate();
        data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
    }

    RasterImage(int width, int height, int channels, std::vector<std::uint8_t> data)
        : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
        validate();
        if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
            throw Error(ErrorCode::invalid_argument, "raster data length does not match dimensions");
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const noexcept { return data_.empty(); }

    std::uint8_t& at(int x, int y, int c = 0) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    std::uint8_t at(int x, int y, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    std::span<std::uint8_t> data() noexcept { return data_; }
    std::span<const std::uint8_t> data() const noexcept { return data_; }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

  private:
    void validate() const {
        if (width_ < 1 || height_ < 1) {
            throw Error(ErrorCode::invalid_argument, "raster dimensions must be positive");
        }
        if (channels_ != 1 && channels_ != 3) {
            throw Error(ErrorCode::wrong_channel_count, "raster must have 1 or 3 channels");
        }
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> data_;
};

namespace detail {
template <typename T>
using plane_storage_t = std::conditional_t<std::is_same_v<T, bool>, std::uint8_t, T>;
}

/// Single-channel row-major grid. `Plane<bool>` stores one byte per sample
/// (0 or 1) so that element references behave like ordinary lvalues.
template <typename T>
class Plane {
  public:
    using value_type = detail::plane_storage_t<T>;

    Plane() = default;
    Plane(int width, int height, value_type fill = value_type{})
        : width_(width), height_(height) {
        if (width < 1 || height < 1) {
            throw Error(ErrorCode::invalid_argument, "plane dimensions must be positive");
        }
        data_.assign(static_cast<std::size_t>(width) * height, fill);
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    value_type& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    value_type operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    value_type& operator[](std::size_t i) { return data_[i]; }
    value_type operator[](std::size_t i) const { return data_[i]; }

    bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    std::span<value_type> data() noexcept { return data_; }
    std::span<const value_type> data() const noexcept { return data_; }

    template <typename U>
    bool same_shape(const Plane<U>& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    friend bool operator==(const Plane&, const Plane&) = default;

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<value_type> data_;
};

using FloatPlane = Plane<double>;
using BinaryMask = Plane<bool>;
using LabelMap = Plane<std::uint32_t>;

template <typename A, typename B>
void require_same_shape(const Plane<A>& a, const Plane<B>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw Error(ErrorCode::dimension_mismatch, std::string(what) + ": operands differ in size");
    }
}

inline std::size_t count_true(const BinaryMask& mask) {
    return static_cast<std::size_t>(std::count(mask.data().begin(), mask.data().end(), std::uint8_t{1}));
}

/// Largest label value, i.e. L for a compacted map.
inline std::uint32_t label_count(const LabelMap& labels) {
    std::uint32_t max_label = 0;
    for (auto v : labels.data()) max_label = std::max(max_label, v);
    return max_label;
}

/// Mask of pixels carrying `label`.
inline BinaryMask mask_of_label(const LabelMap& labels, std::uint32_t label) {
    BinaryMask out(labels.width(), labels.height());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] == label;
    return out;
}

/// Renumbers labels to 1..L in raster order of first appearance; 0 stays 0.
inline LabelMap compact_labels(const LabelMap& labels) {
    LabelMap out(labels.width(), labels.height());
    std::vector<std::uint32_t> remap(label_count(labels) + 1, 0);
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto v = labels[i];
        if (v == 0) continue;
        if (remap[v] == 0) remap[v] = ++next;
        out[i] = remap[v];
    }
    return out;
}

} // namespace leukoseg
