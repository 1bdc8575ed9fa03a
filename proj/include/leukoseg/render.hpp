#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "leukoseg/config_json.hpp"
#include "leukoseg/image_io.hpp"
#include "leukoseg/pipeline.hpp"

namespace leukoseg {

/// Pixels of a labelled region with a 4-neighbour outside that region.
inline BinaryMask label_contours(const LabelMap& labels) {
    BinaryMask out(labels.width(), labels.height());
    for (int y = 0; y < labels.height(); ++y) {
        for (int x = 0; x < labels.width(); ++x) {
            const auto v = labels(x, y);
            if (v == 0) continue;
            const bool edge = x == 0 || y == 0 || x + 1 == labels.width() || y + 1 == labels.height() ||
                              labels(x - 1, y) != v || labels(x + 1, y) != v || labels(x, y - 1) != v ||
                              labels(x, y + 1) != v;
            out(x, y) = edge;
        }
    }
    return out;
}

inline RasterImage render_overlay(const RasterImage& img, const LabelMap& labels, std::uint64_t palette_seed = 0) {
    RasterImage out = img.channels() == 3 ? img : RasterImage(img.width(), img.height(), 3);
    if (img.channels() == 1) {
        for (std::size_t i = 0; i < img.pixel_count(); ++i)
            for (int c = 0; c < 3; ++c) out.data()[3 * i + static_cast<std::size_t>(c)] = img.data()[i];
    }
    const auto palette = label_palette(palette_seed);
    const auto edges = label_contours(labels);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!edges[i]) continue;
        const auto& color = palette[(labels[i] - 1) % 255 + 1];
        for (int c = 0; c < 3; ++c) out.data()[3 * i + static_cast<std::size_t>(c)] = color[static_cast<std::size_t>(c)];
    }
    return out;
}

inline RasterImage crop(const RasterImage& img, const BoundingBox& box) {
    RasterImage out(box.width, box.height, img.channels());
    for (int y = 0; y < box.height; ++y)
        for (int x = 0; x < box.width; ++x)
            for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(box.x + x, box.y + y, c);
    return out;
}

/// Per-image metrics document; `timings` is written as an empty object when absent.
inline Json metrics_json(const InstanceSet& set, const PipelineConfig& cfg, const StageTimings* timings = nullptr) {
    Json instances = Json::array();
    for (const auto& inst : set.instances) {
        instances.push_back({
            {"id", inst.id},
            {"bbox", {inst.bbox.x, inst.bbox.y, inst.bbox.width, inst.bbox.height}},
            {"area", inst.area},
            {"nucleus_area", inst.nucleus_area},
            {"cytoplasm_area", inst.cytoplasm_area},
            {"centroid", {inst.centroid_x, inst.centroid_y}},
        });
    }
    Json timing = Json::object();
    if (timings) {
        timing = {{"stage1", timings->stage1_ms},
                  {"stage2", timings->stage2_ms},
                  {"stage3", timings->stage3_ms},
                  {"total", timings->total_ms}};
    }
    return {
        {"source_id", set.source_id},
        {"n_instances", set.instances.size()},
        {"instances", instances},
        {"roles",
         {{"nucleus", set.roles.nucleus},
          {"cytoplasm", set.roles.cytoplasm},
          {"background", set.roles.background},
          {"iou_scores", set.roles.iou_scores}}},
        {"config", to_json(cfg)},
        {"timings_ms", timing},
    };
}

/// File names used by `render_outputs` for a given source id.
struct OutputNames {
    static std::string labelmap(const std::string& id) { return id + "_labels.png"; }
    static std::string overlay(const std::string& id) { return id + "_overlay.png"; }
    static std::string contours(const std::string& id) { return id + "_contours.png"; }
    static std::string crop(const std::string& id, std::uint32_t instance) {
        return id + "_" + std::to_string(instance) + ".png";
    }
    static std::string mask(const std::string& id, std::uint32_t instance) {
        return id + "_" + std::to_string(instance) + "_mask.png";
    }
    static std::string metrics(const std::string& id) { return id + "_metrics.json"; }
};

/// Writes the requested artifacts into `out_dir` and returns their paths.
inline std::vector<std::filesystem::path> render_outputs(const RasterImage& img, const InstanceSet& set,
                                                         const WatershedResult& ws, const PipelineConfig& cfg,
                                                         const std::filesystem::path& out_dir,
                                                         const StageTimings* timings = nullptr) {
    std::vector<std::filesystem::path> written;
    const auto& id = set.source_id;
    const auto& emit = cfg.emit;
    auto put_image = [&](const RasterImage& image, const std::string& name) {
        save_image(image, out_dir / name);
        written.push_back(out_dir / name);
    };

    if (emit.has(Emit::labelmap)) {
        save_label_map(set.labels, out_dir / OutputNames::labelmap(id));
        written.push_back(out_dir / OutputNames::labelmap(id));
    }
    if (emit.has(Emit::overlay)) put_image(render_overlay(img, set.labels), OutputNames::overlay(id));
    if (emit.has(Emit::contours)) {
        auto edges = label_contours(set.labels);
        RasterImage canvas = label_to_image(set.labels, 0);
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const bool line = ws.boundary[i] != 0;
            for (int c = 0; c < 3; ++c) {
                auto& px = canvas.data()[3 * i + static_cast<std::size_t>(c)];
                px = line ? 255 : (edges[i] ? px : 0);
            }
        }
        put_image(canvas, OutputNames::contours(id));
    }
    for (const auto& inst : set.instances) {
        if (emit.has(Emit::crops)) put_image(crop(img, inst.bbox), OutputNames::crop(id, inst.id));
        if (emit.has(Emit::masks)) put_image(mask_to_image(inst.mask), OutputNames::mask(id, inst.id));
    }
    if (emit.has(Emit::metrics_json)) {
        write_json_file(metrics_json(set, cfg, cfg.record_timings ? timings : nullptr),
                        out_dir / OutputNames::metrics(id));
        written.push_back(out_dir / OutputNames::metrics(id));
    }
    return written;
}

/// Runs the pipeline with tracing on and writes every intermediate as
/// `NN_<name>.png`. Stages that fail still leave the earlier dumps behind;
/// the error is rethrown afterwards.
inline std::vector<std::filesystem::path> dump_stages(const RasterImage& img, const PipelineConfig& cfg,
                                                      const std::filesystem::path& out_dir) {
    StageTrace trace;
    std::vector<std::filesystem::path> written;
    auto flush = [&] {
        for (std::size_t i = written.size(); i < trace.images.size(); ++i) {
            char prefix[8];
            std::snprintf(prefix, sizeof prefix, "%02zu_", i + 1);
            const auto path = out_dir / (prefix + trace.images[i].first + ".png");
            save_image(trace.images[i].second, path);
            written.push_back(path);
        }
    };
    try {
        auto output = run_pipeline_detailed(img, cfg, "dump", &trace);
        trace.add("overlay", render_overlay(img, output.instances.labels));
    } catch (...) {
        flush();
        throw;
    }
    flush();
    return written;
}

} // namespace leukoseg
