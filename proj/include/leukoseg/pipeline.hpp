#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "leukoseg/clustering.hpp"
#include "leukoseg/colorspace.hpp"
#include "leukoseg/error.hpp"
#include "leukoseg/image_io.hpp"
#include "leukoseg/imgproc.hpp"
#include "leukoseg/raster.hpp"
#include "leukoseg/watershed.hpp"

namespace leukoseg {

enum class ClusterDomain { masked, full_frame };
enum class ClusterChannel { lightness, a, b };

enum class Emit : unsigned {
    labelmap = 1u << 0,
    overlay = 1u << 1,
    contours = 1u << 2,
    crops = 1u << 3,
    masks = 1u << 4,
    metrics_json = 1u << 5,
};

class EmitSet {
  public:
    constexpr EmitSet() = default;
    constexpr EmitSet(std::initializer_list<Emit> items) {
        for (auto e : items) bits_ |= static_cast<unsigned>(e);
    }

    constexpr bool has(Emit e) const noexcept { return (bits_ & static_cast<unsigned>(e)) != 0; }
    constexpr void add(Emit e) noexcept { bits_ |= static_cast<unsigned>(e); }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr unsigned bits() const noexcept { return bits_; }

    static constexpr EmitSet defaults() {
        return {Emit::labelmap, Emit::overlay, Emit::crops, Emit::metrics_json};
    }

    friend constexpr bool operator==(EmitSet, EmitSet) = default;

  private:
    unsigned bits_ = 0;
};

struct PipelineConfig {
    int se_radius = 3;
    ElementShape se_shape = ElementShape::ellipse;
    double stretch_low = 0.01;
    double stretch_high = 0.99;
    Polarity y_polarity = Polarity::below;
    Polarity m_polarity = Polarity::above;
    KMeansConfig kmeans{};
    ClusterChannel cluster_channel = ClusterChannel::a;
    ClusterDomain cluster_domain = ClusterDomain::masked;
    SeedConfig seeds{};
    bool clean_nucleus = true; // close, fill holes and open the nucleus cluster before seeding
    int min_cell_area = 50;
    EmitSet emit = EmitSet::defaults();
    bool record_timings = false;

    void validate() const {
        if (se_radius < 1) throw Error(ErrorCode::invalid_argument, "se-radius must be >= 1");
        if (!(stretch_low >= 0.0 && stretch_low < stretch_high && stretch_high <= 1.0)) {
            throw Error(ErrorCode::invalid_argument, "stretch percentiles must satisfy 0 <= low < high <= 1");
        }
        kmeans.validate();
        if (kmeans.k != 3) throw Error(ErrorCode::k_not_3, "the pipeline clusters into exactly three roles");
        seeds.validate();
        if (min_cell_area < 1) throw Error(ErrorCode::invalid_argument, "min-cell-area must be >= 1");
    }

    StructuringElement element() const { return {se_shape, se_radius}; }
};

/// Error raised from inside the pipeline, tagged with the stage (1-3) it came from.
class StageError : public Error {
  public:
    StageError(int stage, const Error& cause)
        : Error(cause.code(), "stage " + std::to_string(stage) + ": " + strip_code(cause)), stage_(stage) {}

    int stage() const noexcept { return stage_; }

  private:
    static std::string strip_code(const Error& e) {
        const std::string what = e.what();
        const auto prefix = std::string(to_string(e.code())) + ": ";
        return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
    }

    int stage_;
};

/// Named intermediate images, appended in pipeline order when requested.
struct StageTrace {
    std::vector<std::pair<std::string, RasterImage>> images;

    void add(std::string name, RasterImage img) { images.emplace_back(std::move(name), std::move(img)); }
};

struct BoundingBox {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Instance {
    std::uint32_t id = 0;
    BinaryMask mask; // full frame
    BoundingBox bbox;
    std::size_t area = 0;
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    std::size_t nucleus_area = 0;
    std::size_t cytoplasm_area = 0;
    friend bool operator==(const Instance&, const Instance&) = default;
};

struct InstanceSet {
    std::string source_id;
    std::vector<Instance> instances;
    BinaryMask semantic_mask;
    RoleAssignment roles;
    LabelMap labels; // instance i occupies label i.id

    BinaryMask union_mask() const {
        BinaryMask out(labels.width(), labels.height());
        for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] != 0;
        return out;
    }

    friend bool operator==(const InstanceSet&, const InstanceSet&) = default;
};

struct SemanticResult {
    BinaryMask mask;
    bool degenerate = false;
};

struct ClusterStage {
    ClusterOutcome clusters;
    RoleAssignment roles;
    BinaryMask rough_nucleus;
};

struct StageTimings {
    double stage1_ms = 0;
    double stage2_ms = 0;
    double stage3_ms = 0;
    double total_ms = 0;
};

struct PipelineOutput {
    InstanceSet instances;
    WatershedResult watershed;
    ClusterStage clustering;
    StageTimings timings;
};

namespace pipeline_detail {

inline bool is_constant(const RasterImage& img) {
    const auto px = img.data();
    const int c = img.channels();
    for (std::size_t i = static_cast<std::size_t>(c); i < px.size(); ++i)
        if (px[i] != px[i % static_cast<std::size_t>(c)]) return false;
    return true;
}

inline RasterImage float_to_gray(const FloatPlane& plane) {
    double hi = 0;
    for (double v : plane.data()) hi = std::max(hi, v);
    return quantize_plane(plane, hi > 0 ? 255.0 / hi : 0.0, 0.0);
}

inline FloatPlane lab_channel(const LabPlanes& lab, ClusterChannel ch) {
    switch (ch) {
    case ClusterChannel::lightness: return lab.l;
    case ClusterChannel::a: return lab.a;
    case ClusterChannel::b: return lab.b;
    }
    return lab.a;
}

inline RasterImage lab_channel_to_gray(const FloatPlane& plane, ClusterChannel ch) {
    return ch == ClusterChannel::lightness ? quantize_plane(plane, 2.55, 0.0) : quantize_plane(plane, 1.0, 128.0);
}

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

} // namespace pipeline_detail

/// Stage 1: cell-versus-background mask from the Y and M planes.
inline SemanticResult stage1_semantic(const RasterImage& img, const PipelineConfig& cfg, StageTrace* trace = nullptr) {
    if (img.channels() != 3) throw Error(ErrorCode::wrong_channel_count, "stage 1 needs a 3-channel RGB image");
    if (pipeline_detail::is_constant(img)) return {BinaryMask(img.width(), img.height()), true};

    const auto cmyk = rgb_to_cmyk(img);
    const auto se = cfg.element();

    const auto y_gray = cmyk_plane_to_gray(cmyk.y);
    const auto y_equalized = equalize_histogram(y_gray);
    const auto y_stretched = stretch_contrast(y_equalized, cfg.stretch_low, cfg.stretch_high).image;
    const auto y_threshold = threshold(y_stretched, otsu_threshold(y_stretched), cfg.y_polarity);
    const auto y_mask = close(y_threshold, se);

    const auto m_gray = cmyk_plane_to_gray(cmyk.m);
    const auto m_threshold = threshold(m_gray, otsu_threshold(m_gray), cfg.m_polarity);
    const auto m_mask = close(m_threshold, se);

    auto semantic = mask_and(y_mask, m_mask);

    if (trace) {
        trace->add("cmyk_c", cmyk_plane_to_gray(cmyk.c));
        trace->add("cmyk_m", m_gray);
        trace->add("cmyk_y", y_gray);
        trace->add("cmyk_k", cmyk_plane_to_gray(cmyk.k));
        trace->add("y_equalized", y_equalized);
        trace->add("y_stretched", y_stretched);
        trace->add("y_thresholded", mask_to_image(y_threshold));
        trace->add("y_closed", mask_to_image(y_mask));
        trace->add("m_thresholded", mask_to_image(m_threshold));
        trace->add("m_closed", mask_to_image(m_mask));
        trace->add("semantic_and", mask_to_image(semantic));
    }
    return {std::move(semantic), false};
}

/// Stage 2: three-way k-means on the stretched Lab channel, roles resolved
/// against a grayscale rough nucleus mask.
inline ClusterStage stage2_cluster(const RasterImage& img, const BinaryMask& semantic, const PipelineConfig& cfg,
                                   StageTrace* trace = nullptr) {
    if (img.channels() != 3) throw Error(ErrorCode::wrong_channel_count, "stage 2 needs a 3-channel RGB image");
    require_same_shape(semantic, BinaryMask(img.width(), img.height()), "stage 2");
    if (count_true(semantic) == 0) throw Error(ErrorCode::empty_semantic_mask, "no cell pixels to cluster");

    const BinaryMask domain =
        cfg.cluster_domain == ClusterDomain::masked ? semantic : BinaryMask(img.width(), img.height(), 1);

    const auto lab = rgb_to_lab(img);
    const auto channel = pipeline_detail::lab_channel_to_gray(pipeline_detail::lab_channel(lab, cfg.cluster_channel),
                                                              cfg.cluster_channel);
    const auto stretched = stretch_contrast(channel, cfg.stretch_low, cfg.stretch_high, &domain).image;
    FloatPlane feature(img.width(), img.height());
    for (std::size_t i = 0; i < feature.size(); ++i) feature[i] = stretched.data()[i];

    auto clusters = kmeans_1d(feature, domain, cfg.kmeans);

    const auto gray = rgb_to_gray(img);
    const auto rough = mask_and(threshold(gray, otsu_threshold(gray, &domain), Polarity::below), domain);
    auto roles = resolve_roles(clusters, rough);

    if (trace) {
        trace->add("lab_channel", channel);
        trace->add("lab_stretched", stretched);
        for (std::uint32_t c = 1; c <= 3; ++c) {
            trace->add("cluster_" + std::to_string(c), mask_to_image(clusters.cluster_mask(c)));
        }
        trace->add("cluster_map", label_to_image(clusters.assignments, 0));
        trace->add("rough_nucleus", mask_to_image(rough));
        trace->add("nucleus_cluster", mask_to_image(clusters.cluster_mask(roles.nucleus)));
        trace->add("cytoplasm_cluster", mask_to_image(clusters.cluster_mask(roles.cytoplasm)));
        trace->add("background_cluster", mask_to_image(clusters.cluster_mask(roles.background)));
    }
    return {std::move(clusters), roles, rough};
}

namespace pipeline_detail {

inline std::uint32_t find_root(std::vector<std::uint32_t>& parent, std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
}

// Folds instances smaller than `min_area` into their largest line-sharing
// neighbour, drops the isolated ones, absorbs line pixels that now separate a
// label from itself, and compacts the labels.
inline LabelMap merge_small_fragments(const WatershedResult& ws, std::size_t min_area) {
    const int w = ws.labels.width();
    const int h = ws.labels.height();
    const auto n = label_count(ws.labels);
    std::vector<std::size_t> area(n + 1, 0);
    for (auto v : ws.labels.data()) ++area[v];

    std::vector<std::set<std::uint32_t>> adjacent(n + 1);
    auto neighbour_labels = [&](const LabelMap& labels, int x, int y) {
        std::set<std::uint32_t> found;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                if (labels.contains(x + dx, y + dy) && labels(x + dx, y + dy) != 0) found.insert(labels(x + dx, y + dy));
        return found;
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!ws.boundary(x, y)) continue;
            const auto found = neighbour_labels(ws.labels, x, y);
            for (auto a : found)
                for (auto b : found)
                    if (a != b) adjacent[a].insert(b);
        }
    }

    std::vector<std::uint32_t> parent(n + 1);
    std::iota(parent.begin(), parent.end(), 0u);
    std::vector<std::uint8_t> dropped(n + 1, 0);
    for (;;) {
        // smallest surviving undersized group first; ties by label
        std::uint32_t small = 0;
        for (std::uint32_t l = 1; l <= n; ++l) {
            if (dropped[l] || find_root(parent, l) != l || area[l] >= min_area) continue;
            if (small == 0 || area[l] < area[small]) small = l;
        }
        if (small == 0) break;
        std::uint32_t target = 0;
        for (std::uint32_t l = 1; l <= n; ++l) {
            if (find_root(parent, l) != small) continue;
            for (auto nb : adjacent[l]) {
                const auto r = find_root(parent, nb);
                if (r == small || dropped[r]) continue;
                if (target == 0 || area[r] > area[target] || (area[r] == area[target] && r < target)) target = r;
            }
        }
        if (target == 0) {
            dropped[small] = 1;
        } else {
            parent[small] = target;
            area[target] += area[small];
        }
    }

    LabelMap merged(w, h);
    for (std::size_t i = 0; i < merged.size(); ++i) {
        const auto v = ws.labels[i];
        if (v == 0) continue;
        const auto r = find_root(parent, v);
        merged[i] = dropped[r] ? 0 : r;
    }
    LabelMap absorbed = merged;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!ws.boundary(x, y)) continue;
            const auto found = neighbour_labels(merged, x, y);
            if (found.size() == 1) {
                // only a line that used to split one merged group
                const auto before = neighbour_labels(ws.labels, x, y);
                if (before.size() > 1) absorbed(x, y) = *found.begin();
            }
        }
    }
    return compact_labels(absorbed);
}

} // namespace pipeline_detail

/// Stage 3: nucleus-seeded watershed over the negated distance transform of
/// the semantic mask, then per-instance records.
inline std::pair<WatershedResult, InstanceSet> stage3_instances(const BinaryMask& semantic, const ClusterStage& stage2,
                                                                const PipelineConfig& cfg,
                                                                StageTrace* trace = nullptr) {
    const auto nucleus_cluster = stage2.clusters.cluster_mask(stage2.roles.nucleus);
    if (count_true(nucleus_cluster) == 0) throw Error(ErrorCode::empty_nucleus_cluster, "nucleus cluster is empty");
    const auto nucleus = mask_and(nucleus_cluster, semantic);
    const auto seed_source =
        cfg.clean_nucleus ? mask_and(open(fill_holes(close(nucleus, cfg.element())), cfg.element()), semantic) : nucleus;

    const auto seeds = extract_seeds(seed_source, cfg.seeds);
    if (label_count(seeds) == 0) throw Error(ErrorCode::no_seeds_found, "no watershed markers survived");

    const auto dist = distance_transform(semantic);
    FloatPlane surface(dist.width(), dist.height());
    for (std::size_t i = 0; i < dist.size(); ++i) surface[i] = -dist[i];

    auto ws = watershed(surface, seeds, semantic);
    const auto labels = pipeline_detail::merge_small_fragments(ws, static_cast<std::size_t>(cfg.min_cell_area));

    const auto cytoplasm = stage2.clusters.cluster_mask(stage2.roles.cytoplasm);
    const auto count = label_count(labels);
    InstanceSet set;
    set.semantic_mask = semantic;
    set.roles = stage2.roles;
    set.labels = labels;

    struct Accumulator {
        int min_x = INT32_MAX, min_y = INT32_MAX, max_x = -1, max_y = -1;
        std::size_t area = 0, nucleus = 0, cytoplasm = 0;
        double sum_x = 0, sum_y = 0;
    };
    std::vector<Accumulator> acc(count + 1);
    for (int y = 0; y < labels.height(); ++y) {
        for (int x = 0; x < labels.width(); ++x) {
            const auto v = labels(x, y);
            if (v == 0) continue;
            auto& a = acc[v];
            a.min_x = std::min(a.min_x, x);
            a.min_y = std::min(a.min_y, y);
            a.max_x = std::max(a.max_x, x);
            a.max_y = std::max(a.max_y, y);
            ++a.area;
            a.sum_x += x;
            a.sum_y += y;
            a.nucleus += nucleus(x, y);
            a.cytoplasm += cytoplasm(x, y);
        }
    }
    for (std::uint32_t l = 1; l <= count; ++l) {
        const auto& a = acc[l];
        Instance inst;
        inst.id = l;
        inst.mask = mask_of_label(labels, l);
        inst.bbox = {a.min_x, a.min_y, a.max_x - a.min_x + 1, a.max_y - a.min_y + 1};
        inst.area = a.area;
        inst.centroid_x = a.sum_x / static_cast<double>(a.area);
        inst.centroid_y = a.sum_y / static_cast<double>(a.area);
        inst.nucleus_area = a.nucleus;
        inst.cytoplasm_area = a.cytoplasm;
        set.instances.push_back(std::move(inst));
    }

    if (trace) {
        trace->add("seed_source", mask_to_image(seed_source));
        trace->add("distance_transform", pipeline_detail::float_to_gray(dist));
        trace->add("seeds", label_to_image(seeds, 0));
        trace->add("watershed_labels", label_to_image(ws.labels, 0));
        trace->add("watershed_lines", mask_to_image(ws.boundary));
        trace->add("instances", label_to_image(labels, 0));
    }
    return {std::move(ws), std::move(set)};
}

/// Full three-stage run with per-stage diagnostics.
inline PipelineOutput run_pipeline_detailed(const RasterImage& img, const PipelineConfig& cfg,
                                            std::string source_id = "image", StageTrace* trace = nullptr) {
    cfg.validate();
    using pipeline_detail::Clock;
    using pipeline_detail::ms_since;
    const auto start = Clock::now();

    int stage = 1;
    try {
        auto t = Clock::now();
        const auto semantic = stage1_semantic(img, cfg, trace);
        if (semantic.degenerate) throw Error(ErrorCode::degenerate_image, "constant input image");
        const double stage1_ms = ms_since(t);

        stage = 2;
        t = Clock::now();
        auto clustering = stage2_cluster(img, semantic.mask, cfg, trace);
        const double stage2_ms = ms_since(t);

        stage = 3;
        t = Clock::now();
        auto [ws, instances] = stage3_instances(semantic.mask, clustering, cfg, trace);
        const double stage3_ms = ms_since(t);

        instances.source_id = std::move(source_id);
        return {std::move(instances), std::move(ws), std::move(clustering),
                {stage1_ms, stage2_ms, stage3_ms, ms_since(start)}};
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e);
    }
}

inline InstanceSet run_pipeline(const RasterImage& img, const PipelineConfig& cfg, std::string source_id = "image") {
    return run_pipeline_detailed(img, cfg, std::move(source_id)).instances;
}

} // namespace leukoseg
