#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <tuple>
#include <vector>

#include "leukoseg/error.hpp"
#include "leukoseg/labeling.hpp"
#include "leukoseg/raster.hpp"

namespace leukoseg {

struct SeedConfig {
    double dt_fraction = 0.5;
    int min_seed_area = 9;

    void validate() const {
        if (!(dt_fraction > 0.0 && dt_fraction < 1.0)) {
            throw Error(ErrorCode::invalid_argument, "seed dt-fraction must lie in (0,1)");
        }
        if (min_seed_area < 1) throw Error(ErrorCode::invalid_argument, "min-seed-area must be >= 1");
    }
};

/// Markers from the distance transform: within each 8-connected component of
/// the mask, keep pixels whose distance is at least `dt_fraction` of that
/// component's peak, then label the survivors. A component with two bulges
/// joined by a neck yields two seeds.
inline LabelMap extract_seeds(const BinaryMask& mask, const SeedConfig& cfg) {
    cfg.validate();
    const auto components = connected_components(mask, Connectivity::eight);
    const auto dist = distance_transform(mask);

    std::vector<double> peak(label_count(components) + 1, 0.0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        peak[components[i]] = std::max(peak[components[i]], dist[i]);
    }
    BinaryMask core(mask.width(), mask.height());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const auto c = components[i];
        core[i] = c != 0 && dist[i] >= cfg.dt_fraction * peak[c];
    }

    const auto seeds = connected_components(core, Connectivity::eight);
    std::vector<std::size_t> area(label_count(seeds) + 1, 0);
    for (auto v : seeds.data()) ++area[v];
    LabelMap kept(mask.width(), mask.height());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto v = seeds[i];
        if (v != 0 && area[v] >= static_cast<std::size_t>(cfg.min_seed_area)) kept[i] = v;
    }
    return compact_labels(kept);
}

struct WatershedResult {
    LabelMap labels;     // 0 = not part of any instance
    BinaryMask boundary; // pixels where two floods met
    BinaryMask unreached; // in-domain pixels no flood could reach (their component holds no seed)
    std::vector<double> flood_levels; // water level at each absorption, in order

    friend bool operator==(const WatershedResult&, const WatershedResult&) = default;
};

/// Marker-controlled priority flood over `surface` restricted to `domain`.
///
/// Pixels are absorbed in ascending order of (level, insertion sequence,
/// raster index), where level is max(surface value, level of the pixel that
/// queued it). A popped pixel whose labelled 8-neighbours carry one label
/// takes that label; two or more labels, or none besides watershed lines,
/// make it a line pixel. Line pixels still queue their neighbours so the
/// flood never stalls behind them.
inline WatershedResult watershed(const FloatPlane& surface, const LabelMap& seeds, const BinaryMask& domain) {
    require_same_shape(surface, seeds, "watershed");
    require_same_shape(surface, domain, "watershed");
    const int w = surface.width();
    const int h = surface.height();

    WatershedResult result{seeds, BinaryMask(w, h), BinaryMask(w, h), {}};
    auto& labels = result.labels;
    bool any_seed = false;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (seeds[i] == 0) continue;
        if (!domain[i]) throw Error(ErrorCode::seed_outside_domain, "watershed seed lies outside the domain");
        any_seed = true;
    }
    if (!any_seed) throw Error(ErrorCode::empty_seeds, "watershed needs at least one seed");

    using Entry = std::tuple<double, std::uint64_t, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    std::vector<std::uint8_t> queued(labels.size(), 0);
    std::uint64_t sequence = 0;

    static constexpr int dx[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static constexpr int dy[] = {-1, -1, -1, 0, 0, 1, 1, 1};

    auto push_neighbours = [&](int x, int y, double level) {
        for (int n = 0; n < 8; ++n) {
            const int nx = x + dx[n];
            const int ny = y + dy[n];
            if (!domain.contains(nx, ny)) continue;
            const auto j = static_cast<std::size_t>(ny) * w + nx;
            if (!domain[j] || labels[j] != 0 || queued[j]) continue;
            queued[j] = 1;
            queue.emplace(std::max(surface[j], level), sequence++, j);
        }
    };

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (labels(x, y) != 0) push_neighbours(x, y, surface(x, y));

    while (!queue.empty()) {
        const auto [level, seq, i] = queue.top();
        queue.pop();
        const int x = static_cast<int>(i % w);
        const int y = static_cast<int>(i / w);

        std::uint32_t found = 0;
        bool conflict = false;
        for (int n = 0; n < 8 && !conflict; ++n) {
            const int nx = x + dx[n];
            const int ny = y + dy[n];
            if (!labels.contains(nx, ny)) continue;
            const auto v = labels(nx, ny);
            if (v == 0) continue;
            if (found == 0) {
                found = v;
            } else if (v != found) {
                conflict = true;
            }
        }
        result.flood_levels.push_back(level);
        if (found != 0 && !conflict) {
            labels[i] = found;
        } else {
            result.boundary[i] = 1;
        }
        push_neighbours(x, y, level);
    }

    for (std::size_t i = 0; i < labels.size(); ++i) {
        result.unreached[i] = domain[i] && labels[i] == 0 && !result.boundary[i];
    }
    return result;
}

} // namespace leukoseg
