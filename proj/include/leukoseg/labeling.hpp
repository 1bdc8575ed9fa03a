#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "leukoseg/error.hpp"
#include "leukoseg/raster.hpp"

namespace leukoseg {

enum class Connectivity { four = 4, eight = 8 };

namespace label_detail {

class DisjointSets {
  public:
    std::uint32_t make() {
        parent_.push_back(static_cast<std::uint32_t>(parent_.size()));
        return parent_.back();
    }

    std::uint32_t find(std::uint32_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) std::swap(a, b);
        parent_[a] = b;
    }

  private:
    std::vector<std::uint32_t> parent_;
};

} // namespace label_detail

/// Two-pass union-find labeling. Labels are 1..L in raster order of each
/// component's first pixel.
inline LabelMap connected_components(const BinaryMask& mask, Connectivity connectivity = Connectivity::eight) {
    const int w = mask.width();
    const int h = mask.height();
    LabelMap provisional(w, h);
    label_detail::DisjointSets sets;
    sets.make(); // slot 0 is background

    // already-visited neighbours in raster order
    static constexpr int nx8[] = {-1, -1, 0, 1};
    static constexpr int ny8[] = {0, -1, -1, -1};
    const int nbrs = connectivity == Connectivity::eight ? 4 : 2;
    static constexpr int nx4[] = {-1, 0};
    static constexpr int ny4[] = {0, -1};

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask(x, y)) continue;
            std::uint32_t label = 0;
            for (int k = 0; k < nbrs; ++k) {
                const int qx = x + (connectivity == Connectivity::eight ? nx8[k] : nx4[k]);
                const int qy = y + (connectivity == Connectivity::eight ? ny8[k] : ny4[k]);
                if (!mask.contains(qx, qy)) continue;
                const auto other = provisional(qx, qy);
                if (other == 0) continue;
                if (label == 0) {
                    label = other;
                } else {
                    sets.unite(label, other);
                }
            }
            provisional(x, y) = label != 0 ? label : sets.make();
        }
    }

    LabelMap out(w, h);
    std::vector<std::uint32_t> final_label;
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (provisional[i] == 0) continue;
        const auto root = sets.find(provisional[i]);
        if (root >= final_label.size()) final_label.resize(root + 1, 0);
        if (final_label[root] == 0) final_label[root] = ++next;
        out[i] = final_label[root];
    }
    return out;
}

namespace label_detail {

// Felzenszwalb-Huttenlocher lower envelope of parabolas, in place on `f`.
inline void squared_edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                           std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = 0;
    // first finite sample anchors the envelope; all-infinite rows stay infinite
    int first = 0;
    while (first < n && std::isinf(f[first])) ++first;
    if (first == n) return;
    v[0] = first;
    z[0] = -inf;
    z[1] = inf;
    for (int q = first + 1; q < n; ++q) {
        if (std::isinf(f[q])) continue;
        double s = 0;
        for (;;) {
            const int p = v[k];
            s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
    f.swap(d);
}

} // namespace label_detail

/// Exact Euclidean distance from each true pixel to the nearest false pixel,
/// with the region beyond the frame counted as false.
inline FloatPlane distance_transform(const BinaryMask& mask) {
    const int w = mask.width() + 2;
    const int h = mask.height() + 2;
    constexpr double inf = std::numeric_limits<double>::infinity();
    // one-pixel false border stands in for the outside world
    std::vector<double> grid(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            grid[static_cast<std::size_t>(y + 1) * w + x + 1] = mask(x, y) ? inf : 0.0;

    const int longest = std::max(w, h);
    std::vector<double> f, d(longest);
    std::vector<int> v(longest);
    std::vector<double> z(longest + 1);

    f.resize(h);
    d.resize(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
        label_detail::squared_edt_1d(f, d, v, z);
        for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = f[y];
    }
    f.resize(w);
    d.resize(w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = grid[static_cast<std::size_t>(y) * w + x];
        label_detail::squared_edt_1d(f, d, v, z);
        for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = f[x];
    }

    FloatPlane out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            out(x, y) = std::sqrt(grid[static_cast<std::size_t>(y + 1) * w + x + 1]);
    return out;
}

/// Fills background regions not connected (4-connectivity) to the frame border.
inline BinaryMask fill_holes(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    BinaryMask outside(w, h);
    std::vector<std::pair<int, int>> stack;
    auto seed = [&](int x, int y) {
        if (!mask(x, y) && !outside(x, y)) {
            outside(x, y) = 1;
            stack.emplace_back(x, y);
        }
    };
    for (int x = 0; x < w; ++x) {
        seed(x, 0);
        seed(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        seed(0, y);
        seed(w - 1, y);
    }
    while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        if (x > 0) seed(x - 1, y);
        if (x + 1 < w) seed(x + 1, y);
        if (y > 0) seed(x, y - 1);
        if (y + 1 < h) seed(x, y + 1);
    }
    BinaryMask out(w, h);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = !outside[i];
    return out;
}

} // namespace leukoseg
