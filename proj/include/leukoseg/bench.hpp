#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "leukoseg/clustering.hpp"
#include "leukoseg/error.hpp"
#include "leukoseg/image_io.hpp"
#include "leukoseg/morphology.hpp"
#include "leukoseg/pipeline.hpp"
#include "leukoseg/raster.hpp"

namespace leukoseg {

using Rgb = std::array<int, 3>;

struct SynthConfig {
    int width = 512;
    int height = 512;
    int n_cells = 8;
    double radius_min = 24.0;
    double radius_max = 38.0;
    double nucleus_fraction_min = 0.45;
    double nucleus_fraction_max = 0.6;
    double aspect_min = 0.85; // minor/major axis ratio lower bound
    int overlap_pairs = 0;
    double overlap_distance = 1.4; // pair center distance in mean radii
    double noise_sigma = 5.0;
    std::uint64_t seed = 42;
    Rgb background{235, 220, 225};
    Rgb cytoplasm{175, 145, 225};
    Rgb nucleus{110, 50, 150};
    int background_jitter = 4;
    int cytoplasm_jitter = 10;
    int nucleus_jitter = 10;
    int min_gap = 4; // clearance between cells that are not a deliberate pair
    int max_attempts = 20000;

    void validate() const {
        auto fail = [](const std::string& msg) { throw Error(ErrorCode::invalid_spec, msg); };
        if (width < 8 || height < 8) fail("width/height: must be at least 8");
        if (n_cells < 0) fail("n_cells: must be >= 0");
        if (!(radius_min >= 2.0 && radius_min <= radius_max)) fail("radius_range: need 2 <= min <= max");
        if (2.0 * radius_max + 2.0 > std::min(width, height)) fail("radius_range: cells do not fit in the frame");
        if (!(nucleus_fraction_min > 0.0 && nucleus_fraction_min <= nucleus_fraction_max && nucleus_fraction_max < 1.0))
            fail("nucleus_fraction_range: need 0 < min <= max < 1");
        if (!(aspect_min > 0.0 && aspect_min <= 1.0)) fail("aspect_min: must lie in (0,1]");
        if (overlap_pairs < 0 || 2 * overlap_pairs > n_cells) fail("overlap_pairs: need 0 <= 2*pairs <= n_cells");
        if (!(overlap_distance > 0.0)) fail("overlap_distance: must be > 0");
        if (!(noise_sigma >= 0.0)) fail("noise_sigma: must be >= 0");
        for (const auto* c : {&background, &cytoplasm, &nucleus})
            for (int v : *c)
                if (v < 0 || v > 255) fail("palette: channel values must lie in [0,255]");
        if (background_jitter < 0 || cytoplasm_jitter < 0 || nucleus_jitter < 0) fail("palette: jitter must be >= 0");
        if (min_gap < 0) fail("min_gap: must be >= 0");
        if (max_attempts < 1) fail("max_attempts: must be >= 1");
    }
};

struct GroundTruth {
    LabelMap instances;
    BinaryMask nucleus;
    BinaryMask cytoplasm;
    BinaryMask semantic;

    friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct SyntheticSlide {
    RasterImage image;
    GroundTruth truth;
};

namespace synth_detail {

// Deterministic across standard libraries: only raw mt19937_64 output is used.
class Random {
  public:
    explicit Random(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int integer(int lo, int hi) {
        return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0;
        do u = uniform(); while (u <= 0.0);
        const double v = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u));
        spare_ = mag * std::sin(2.0 * std::numbers::pi * v);
        has_spare_ = true;
        return mag * std::cos(2.0 * std::numbers::pi * v);
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0;
    bool has_spare_ = false;
};

struct Cell {
    double cx, cy;
    double major, minor, angle;
    double nucleus_fraction;
    double nx, ny; // nucleus center
    Rgb cytoplasm, nucleus;

    // Quadratic-form level: <= 1 inside the cell outline.
    double level(double x, double y, double ox, double oy, double scale) const {
        const double dx = x - ox;
        const double dy = y - oy;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double u = (dx * c + dy * s) / (major * scale);
        const double v = (-dx * s + dy * c) / (minor * scale);
        return u * u + v * v;
    }
    double cell_level(double x, double y) const { return level(x, y, cx, cy, 1.0); }
    bool in_nucleus(double x, double y) const { return level(x, y, nx, ny, nucleus_fraction) <= 1.0; }
};

// Stain density moves all channels together; the hue only drifts a little.
inline Rgb jittered(const Rgb& base, int jitter, Random& rng) {
    const int shift = rng.integer(-jitter, jitter);
    const int tint = jitter / 4;
    Rgb out{};
    for (std::size_t c = 0; c < 3; ++c) out[c] = std::clamp(base[c] + shift + rng.integer(-tint, tint), 0, 255);
    return out;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace synth_detail

/// Seed for slide `index` of a corpus rooted at `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return synth_detail::splitmix64(seed ^ synth_detail::splitmix64(index + 1));
}

/// Pale noisy background with elliptical cells (cytoplasm + inner nucleus).
/// Deliberate pairs sit `overlap_distance` mean radii apart; all other cells
/// keep `min_gap` clearance. Ground truth is recorded before noise.
inline SyntheticSlide generate_slide(const SynthConfig& cfg) {
    cfg.validate();
    using synth_detail::Cell;
    synth_detail::Random rng(cfg.seed);

    auto random_shape = [&](Cell& cell, double radius) {
        cell.major = radius;
        cell.minor = radius * rng.uniform(cfg.aspect_min, 1.0);
        cell.angle = rng.uniform(0.0, std::numbers::pi);
        cell.nucleus_fraction = rng.uniform(cfg.nucleus_fraction_min, cfg.nucleus_fraction_max);
        const double room = 0.15 * (1.0 - cell.nucleus_fraction) * cell.minor;
        const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
        cell.nx = cell.cx + room * std::cos(dir);
        cell.ny = cell.cy + room * std::sin(dir);
        cell.cytoplasm = synth_detail::jittered(cfg.cytoplasm, cfg.cytoplasm_jitter, rng);
        cell.nucleus = synth_detail::jittered(cfg.nucleus, cfg.nucleus_jitter, rng);
    };
    auto fits_frame = [&](double cx, double cy, double r) {
        return cx - r >= 1.0 && cy - r >= 1.0 && cx + r <= cfg.width - 2.0 && cy + r <= cfg.height - 2.0;
    };

    std::vector<Cell> cells;
    std::vector<int> group; // cells sharing a group id may overlap
    auto clear_of_others = [&](double cx, double cy, double r) {
        for (const auto& other : cells) {
            if (std::hypot(cx - other.cx, cy - other.cy) < r + other.major + cfg.min_gap) return false;
        }
        return true;
    };

    int attempts = 0;
    auto exhausted = [&] {
        if (++attempts > cfg.max_attempts) {
            throw Error(ErrorCode::cells_do_not_fit, "placement retries exhausted after " +
                                                         std::to_string(cfg.max_attempts) + " attempts");
        }
    };

    int next_group = 0;
    for (int p = 0; p < cfg.overlap_pairs; ++p) {
        for (;;) {
            exhausted();
            const double ra = rng.uniform(cfg.radius_min, cfg.radius_max);
            const double rb = rng.uniform(cfg.radius_min, cfg.radius_max);
            const double dist = cfg.overlap_distance * 0.5 * (ra + rb);
            const double ax = rng.uniform(ra, cfg.width - ra);
            const double ay = rng.uniform(ra, cfg.height - ra);
            const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double bx = ax + dist * std::cos(dir);
            const double by = ay + dist * std::sin(dir);
            if (!fits_frame(ax, ay, ra) || !fits_frame(bx, by, rb)) continue;
            if (!clear_of_others(ax, ay, ra) || !clear_of_others(bx, by, rb)) continue;
            Cell a{}, b{};
            a.cx = ax;
            a.cy = ay;
            b.cx = bx;
            b.cy = by;
            random_shape(a, ra);
            random_shape(b, rb);
            cells.push_back(a);
            cells.push_back(b);
            group.push_back(next_group);
            group.push_back(next_group);
            ++next_group;
            break;
        }
    }
    while (static_cast<int>(cells.size()) < cfg.n_cells) {
        exhausted();
        const double r = rng.uniform(cfg.radius_min, cfg.radius_max);
        const double cx = rng.uniform(r, cfg.width - r);
        const double cy = rng.uniform(r, cfg.height - r);
        if (!fits_frame(cx, cy, r) || !clear_of_others(cx, cy, r)) continue;
        Cell c{};
        c.cx = cx;
        c.cy = cy;
        random_shape(c, r);
        cells.push_back(c);
        group.push_back(next_group++);
    }

    const Rgb background = synth_detail::jittered(cfg.background, cfg.background_jitter, rng);
    GroundTruth truth{LabelMap(cfg.width, cfg.height), BinaryMask(cfg.width, cfg.height),
                      BinaryMask(cfg.width, cfg.height), BinaryMask(cfg.width, cfg.height)};
    std::vector<double> color(static_cast<std::size_t>(cfg.width) * cfg.height * 3);

    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            std::size_t owner = cells.size();
            bool owner_nucleus = false;
            double best_level = 0;
            for (std::size_t i = 0; i < cells.size(); ++i) {
                const auto& cell = cells[i];
                if (std::abs(x - cell.cx) > cell.major + 1 || std::abs(y - cell.cy) > cell.major + 1) continue;
                const double level = cell.cell_level(x, y);
                if (level > 1.0) continue;
                const bool nuc = cell.in_nucleus(x, y);
                // a nucleus always belongs to its own cell; otherwise the lower level wins
                if (owner == cells.size() || (nuc && !owner_nucleus) || (nuc == owner_nucleus && level < best_level)) {
                    owner = i;
                    owner_nucleus = nuc;
                    best_level = level;
                }
            }
            const auto idx = static_cast<std::size_t>(y) * cfg.width + x;
            const Rgb* paint = &background;
            if (owner != cells.size()) {
                truth.instances[idx] = static_cast<std::uint32_t>(owner + 1);
                truth.semantic[idx] = 1;
                if (owner_nucleus) {
                    truth.nucleus[idx] = 1;
                    paint = &cells[owner].nucleus;
                } else {
                    truth.cytoplasm[idx] = 1;
                    paint = &cells[owner].cytoplasm;
                }
            }
            for (int c = 0; c < 3; ++c) color[idx * 3 + static_cast<std::size_t>(c)] = (*paint)[static_cast<std::size_t>(c)];
        }
    }

    RasterImage image(cfg.width, cfg.height, 3);
    auto px = image.data();
    for (std::size_t i = 0; i < color.size(); ++i) {
        const double noisy = color[i] + (cfg.noise_sigma > 0 ? cfg.noise_sigma * rng.normal() : 0.0);
        px[i] = static_cast<std::uint8_t>(std::clamp(std::floor(noisy + 0.5), 0.0, 255.0));
    }
    return {std::move(image), std::move(truth)};
}

struct MatchPair {
    std::uint32_t truth_id = 0;
    std::uint32_t pred_id = 0;
    double iou = 0.0;
    friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct EvalReport {
    double semantic_iou = 0.0;
    double mean_matched_instance_iou = 0.0;
    std::size_t n_predicted = 0;
    std::size_t n_truth = 0;
    std::vector<MatchPair> pairs;
    std::size_t unmatched_predicted = 0;
    std::size_t unmatched_truth = 0;

    /// |predicted - truth| / truth; 0 when both are empty.
    double count_error() const {
        if (n_truth == 0) return n_predicted == 0 ? 0.0 : 1.0;
        const double diff = std::abs(static_cast<double>(n_predicted) - static_cast<double>(n_truth));
        return diff / static_cast<double>(n_truth);
    }
};

inline constexpr double kMinMatchIou = 0.1;

/// Semantic IoU of the label supports plus greedy descending-IoU instance matching.
inline EvalReport evaluate(const LabelMap& predicted, const LabelMap& truth) {
    require_same_shape(predicted, truth, "evaluate");
    EvalReport report;
    std::map<std::uint32_t, std::size_t> pred_area, truth_area;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> overlap;
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const auto p = predicted[i];
        const auto t = truth[i];
        if (p) ++pred_area[p];
        if (t) ++truth_area[t];
        if (p && t) ++overlap[{t, p}];
        inter += p && t;
        uni += p || t;
    }
    report.semantic_iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    report.n_predicted = pred_area.size();
    report.n_truth = truth_area.size();

    std::vector<MatchPair> candidates;
    for (const auto& [key, count] : overlap) {
        const auto [t, p] = key;
        const double value = static_cast<double>(count) /
                             static_cast<double>(truth_area[t] + pred_area[p] - count);
        if (value >= kMinMatchIou) candidates.push_back({t, p, value});
    }
    std::sort(candidates.begin(), candidates.end(), [](const MatchPair& a, const MatchPair& b) {
        return std::tie(b.iou, a.truth_id, a.pred_id) < std::tie(a.iou, b.truth_id, b.pred_id);
    });
    std::map<std::uint32_t, bool> used_truth, used_pred;
    double sum = 0;
    for (const auto& c : candidates) {
        if (used_truth[c.truth_id] || used_pred[c.pred_id]) continue;
        used_truth[c.truth_id] = used_pred[c.pred_id] = true;
        report.pairs.push_back(c);
        sum += c.iou;
    }
    report.mean_matched_instance_iou = report.pairs.empty() ? 0.0 : sum / static_cast<double>(report.pairs.size());
    report.unmatched_predicted = report.n_predicted - report.pairs.size();
    report.unmatched_truth = report.n_truth - report.pairs.size();
    return report;
}

inline EvalReport evaluate(const InstanceSet& predicted, const GroundTruth& truth) {
    return evaluate(predicted.labels, truth.instances);
}

/// Ground-truth files that accompany `<id>.png` in a corpus directory.
struct TruthNames {
    static std::string image(const std::string& id) { return id + ".png"; }
    static std::string instances(const std::string& id) { return id + "_instances.png"; }
    static std::string nucleus(const std::string& id) { return id + "_nucleus.png"; }
    static std::string cytoplasm(const std::string& id) { return id + "_cytoplasm.png"; }
    static std::string semantic(const std::string& id) { return id + "_semantic.png"; }

    static bool is_truth_file(const std::string& filename) {
        for (const char* suffix : {"_instances.png", "_nucleus.png", "_cytoplasm.png", "_semantic.png"}) {
            const std::string s = suffix;
            if (filename.size() > s.size() && filename.compare(filename.size() - s.size(), s.size(), s) == 0)
                return true;
        }
        return false;
    }
};

inline void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& dir, const std::string& id) {
    save_label_map(truth.instances, dir / TruthNames::instances(id));
    save_image(mask_to_image(truth.nucleus), dir / TruthNames::nucleus(id));
    save_image(mask_to_image(truth.cytoplasm), dir / TruthNames::cytoplasm(id));
    save_image(mask_to_image(truth.semantic), dir / TruthNames::semantic(id));
}

/// Only the instance map is required; role masks default to empty when absent.
inline GroundTruth load_ground_truth(const std::filesystem::path& dir, const std::string& id) {
    GroundTruth truth;
    truth.instances = load_label_map(dir / TruthNames::instances(id));
    const int w = truth.instances.width();
    const int h = truth.instances.height();
    auto optional_mask = [&](const std::string& name) {
        const auto path = dir / name;
        if (!std::filesystem::exists(path)) return BinaryMask(w, h);
        auto mask = image_to_mask(load_image(path));
        require_same_shape(mask, truth.instances, "ground truth");
        return mask;
    };
    truth.nucleus = optional_mask(TruthNames::nucleus(id));
    truth.cytoplasm = optional_mask(TruthNames::cytoplasm(id));
    truth.semantic = BinaryMask(w, h);
    for (std::size_t i = 0; i < truth.semantic.size(); ++i) truth.semantic[i] = truth.instances[i] != 0;
    return truth;
}

} // namespace leukoseg
