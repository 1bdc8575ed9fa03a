#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "leukoseg/bench.hpp"
#include "leukoseg/config_json.hpp"
#include "leukoseg/pipeline.hpp"
#include "leukoseg/render.hpp"

namespace leukoseg {

/// A synthetic corpus: `n_slides` slides whose cell count is drawn from
/// [n_cells_min, n_cells_max]; everything else comes from `slide`.
struct CorpusSpec {
    int n_slides = 50;
    int n_cells_min = 5;
    int n_cells_max = 12;
    SynthConfig slide{};

    void validate() const {
        if (n_slides < 0) throw Error(ErrorCode::invalid_spec, "n_slides: must be >= 0");
        if (n_cells_min < 0 || n_cells_min > n_cells_max) {
            throw Error(ErrorCode::invalid_spec, "n_cells: need 0 <= min <= max");
        }
        auto probe = slide;
        probe.n_cells = n_cells_max;
        probe.validate();
        probe.n_cells = n_cells_min;
        probe.validate();
    }

    static std::string slide_id(int index) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "slide_%04d", index);
        return buf;
    }

    /// Full generator config for slide `index`.
    SynthConfig slide_config(int index) const {
        SynthConfig cfg = slide;
        const auto seed = derive_seed(slide.seed, static_cast<std::uint64_t>(index));
        cfg.seed = seed;
        const auto span = static_cast<std::uint64_t>(n_cells_max - n_cells_min + 1);
        cfg.n_cells = n_cells_min + static_cast<int>(synth_detail::splitmix64(seed) % span);
        return cfg;
    }
};

namespace corpus_detail {

inline Rgb rgb_from(const Json& v, const std::string& field) {
    if (!v.is_array() || v.size() != 3) throw Error(ErrorCode::invalid_spec, field + ": expected [r, g, b]");
    Rgb out{};
    for (std::size_t c = 0; c < 3; ++c) out[c] = json_detail::number<int>(v[c], field);
    return out;
}

inline std::pair<double, double> range_from(const Json& v, const std::string& field) {
    if (!v.is_array() || v.size() != 2) throw Error(ErrorCode::invalid_spec, field + ": expected [min, max]");
    return {json_detail::number<double>(v[0], field), json_detail::number<double>(v[1], field)};
}

} // namespace corpus_detail

/// Reads a corpus spec. `n_cells` may be an integer or a [min, max] pair.
inline CorpusSpec corpus_spec_from_json(const Json& j) {
    using json_detail::number;
    json_detail::require_object(j, "spec");
    CorpusSpec spec;
    auto& s = spec.slide;
    for (const auto& [key, v] : j.items()) {
        if (key == "n_slides") spec.n_slides = number<int>(v, key);
        else if (key == "n_cells") {
            if (v.is_array()) {
                const auto [lo, hi] = corpus_detail::range_from(v, key);
                spec.n_cells_min = static_cast<int>(lo);
                spec.n_cells_max = static_cast<int>(hi);
            } else {
                spec.n_cells_min = spec.n_cells_max = number<int>(v, key);
            }
        } else if (key == "width") s.width = number<int>(v, key);
        else if (key == "height") s.height = number<int>(v, key);
        else if (key == "radius_range") std::tie(s.radius_min, s.radius_max) = corpus_detail::range_from(v, key);
        else if (key == "nucleus_fraction_range")
            std::tie(s.nucleus_fraction_min, s.nucleus_fraction_max) = corpus_detail::range_from(v, key);
        else if (key == "aspect_min") s.aspect_min = number<double>(v, key);
        else if (key == "overlap_pairs") s.overlap_pairs = number<int>(v, key);
        else if (key == "overlap_distance") s.overlap_distance = number<double>(v, key);
        else if (key == "noise_sigma") s.noise_sigma = number<double>(v, key);
        else if (key == "seed") s.seed = number<std::uint64_t>(v, key);
        else if (key == "min_gap") s.min_gap = number<int>(v, key);
        else if (key == "max_attempts") s.max_attempts = number<int>(v, key);
        else if (key == "palette") {
            json_detail::require_object(v, key);
            for (const auto& [name, p] : v.items()) {
                const auto field = key + "." + name;
                if (name == "background") s.background = corpus_detail::rgb_from(p, field);
                else if (name == "cytoplasm") s.cytoplasm = corpus_detail::rgb_from(p, field);
                else if (name == "nucleus") s.nucleus = corpus_detail::rgb_from(p, field);
                else if (name == "background_jitter") s.background_jitter = number<int>(p, field);
                else if (name == "cytoplasm_jitter") s.cytoplasm_jitter = number<int>(p, field);
                else if (name == "nucleus_jitter") s.nucleus_jitter = number<int>(p, field);
                else throw Error(ErrorCode::invalid_spec, field + ": unknown field");
            }
        } else {
            throw Error(ErrorCode::invalid_spec, key + ": unknown field");
        }
    }
    spec.validate();
    return spec;
}

inline Json to_json(const CorpusSpec& spec) {
    const auto& s = spec.slide;
    return {
        {"n_slides", spec.n_slides},
        {"n_cells", {spec.n_cells_min, spec.n_cells_max}},
        {"width", s.width},
        {"height", s.height},
        {"radius_range", {s.radius_min, s.radius_max}},
        {"nucleus_fraction_range", {s.nucleus_fraction_min, s.nucleus_fraction_max}},
        {"aspect_min", s.aspect_min},
        {"overlap_pairs", s.overlap_pairs},
        {"overlap_distance", s.overlap_distance},
        {"noise_sigma", s.noise_sigma},
        {"seed", s.seed},
        {"min_gap", s.min_gap},
        {"max_attempts", s.max_attempts},
        {"palette",
         {{"background", s.background},
          {"cytoplasm", s.cytoplasm},
          {"nucleus", s.nucleus},
          {"background_jitter", s.background_jitter},
          {"cytoplasm_jitter", s.cytoplasm_jitter},
          {"nucleus_jitter", s.nucleus_jitter}}},
    };
}

/// Writes `<id>.png` plus its ground-truth files for every slide; returns the ids.
inline std::vector<std::string> write_synthetic_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> ids;
    for (int i = 0; i < spec.n_slides; ++i) {
        const auto id = CorpusSpec::slide_id(i);
        const auto slide = generate_slide(spec.slide_config(i));
        save_image(slide.image, out_dir / TruthNames::image(id));
        save_ground_truth(slide.truth, out_dir, id);
        ids.push_back(id);
    }
    return ids;
}

inline Json to_json(const EvalReport& r) {
    Json pairs = Json::array();
    for (const auto& p : r.pairs) pairs.push_back({{"truth_id", p.truth_id}, {"pred_id", p.pred_id}, {"iou", p.iou}});
    return {
        {"semantic_iou", r.semantic_iou},
        {"mean_matched_instance_iou", r.mean_matched_instance_iou},
        {"n_predicted", r.n_predicted},
        {"n_truth", r.n_truth},
        {"count_error", r.count_error()},
        {"pairs", pairs},
        {"unmatched_predicted", r.unmatched_predicted},
        {"unmatched_truth", r.unmatched_truth},
    };
}

inline EvalReport eval_report_from_json(const Json& j) {
    EvalReport r;
    r.semantic_iou = j.at("semantic_iou").get<double>();
    r.mean_matched_instance_iou = j.at("mean_matched_instance_iou").get<double>();
    r.n_predicted = j.at("n_predicted").get<std::size_t>();
    r.n_truth = j.at("n_truth").get<std::size_t>();
    for (const auto& p : j.at("pairs"))
        r.pairs.push_back({p.at("truth_id").get<std::uint32_t>(), p.at("pred_id").get<std::uint32_t>(),
                           p.at("iou").get<double>()});
    r.unmatched_predicted = j.at("unmatched_predicted").get<std::size_t>();
    r.unmatched_truth = j.at("unmatched_truth").get<std::size_t>();
    return r;
}

/// One corpus member: an id plus a loader for its image and ground truth.
struct CorpusItem {
    std::string source_id;
    std::function<SyntheticSlide()> load;
};

inline std::vector<CorpusItem> synthetic_items(const CorpusSpec& spec) {
    spec.validate();
    std::vector<CorpusItem> items;
    for (int i = 0; i < spec.n_slides; ++i) {
        items.push_back({CorpusSpec::slide_id(i), [spec, i] { return generate_slide(spec.slide_config(i)); }});
    }
    return items;
}

/// Every `<id>.png` in `dir` that is not itself a ground-truth file, sorted by id.
inline std::vector<CorpusItem> directory_items(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::file_not_found, dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        if (io_detail::lower_extension(entry.path()) != ".png" || TruthNames::is_truth_file(name)) continue;
        ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    std::vector<CorpusItem> items;
    for (const auto& id : ids) {
        items.push_back({id, [dir, id] {
                             return SyntheticSlide{load_image(dir / TruthNames::image(id)), load_ground_truth(dir, id)};
                         }});
    }
    return items;
}

struct CorpusFailure {
    std::string source_id;
    std::string error;
};

struct CorpusImageResult {
    std::string source_id;
    EvalReport report;
};

struct Statistic {
    double mean = 0, median = 0, min = 0;
};

struct CorpusSummary {
    std::vector<CorpusImageResult> results; // sorted by source id
    std::vector<CorpusFailure> failures;    // sorted by source id
    Statistic semantic_iou;
    Statistic instance_iou;
    double mean_count_error = 0;
};

inline Statistic summarize(std::vector<double> values) {
    if (values.empty()) return {};
    std::sort(values.begin(), values.end());
    Statistic s;
    double sum = 0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    const auto n = values.size();
    s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    s.min = values.front();
    return s;
}

inline Json to_json(const CorpusSummary& s) {
    Json failures = Json::array();
    for (const auto& f : s.failures) failures.push_back({{"source_id", f.source_id}, {"error", f.error}});
    Json images = Json::array();
    for (const auto& r : s.results) {
        images.push_back({{"source_id", r.source_id},
                          {"semantic_iou", r.report.semantic_iou},
                          {"instance_iou", r.report.mean_matched_instance_iou},
                          {"n_predicted", r.report.n_predicted},
                          {"n_truth", r.report.n_truth}});
    }
    return {
        {"n_images", s.results.size()},
        {"mean_semantic_iou", s.semantic_iou.mean},
        {"median_semantic_iou", s.semantic_iou.median},
        {"min_semantic_iou", s.semantic_iou.min},
        {"mean_instance_iou", s.instance_iou.mean},
        {"median_instance_iou", s.instance_iou.median},
        {"min_instance_iou", s.instance_iou.min},
        {"mean_count_error", s.mean_count_error},
        {"failures", failures},
        {"images", images},
    };
}

struct CorpusOptions {
    std::filesystem::path out_dir; // empty: keep everything in memory
    unsigned jobs = 1;
    bool force = false;
    std::function<void(const std::string& source_id, const std::string& status)> progress;
};

/// Runs the pipeline over every item and aggregates the evaluation. With an
/// output directory, writes `<id>.json` per image and `summary.json`, and
/// skips images whose result file already exists unless `force` is set.
/// Per-image failures are recorded, never fatal.
inline CorpusSummary run_corpus(const std::vector<CorpusItem>& items, const PipelineConfig& cfg,
                                const CorpusOptions& options = {}) {
    cfg.validate();
    if (items.empty()) throw Error(ErrorCode::invalid_argument, "corpus is empty");
    if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);

    std::vector<std::optional<EvalReport>> reports(items.size());
    std::vector<std::string> errors(items.size());
    std::atomic<std::size_t> next{0};
    std::mutex progress_lock;
    auto notify = [&](const std::string& id, const std::string& status) {
        if (!options.progress) return;
        std::lock_guard lock(progress_lock);
        options.progress(id, status);
    };

    auto worker = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
            const auto& item = items[i];
            const auto result_path = options.out_dir.empty() ? std::filesystem::path{}
                                                              : options.out_dir / (item.source_id + ".json");
            try {
                if (!result_path.empty() && !options.force && std::filesystem::exists(result_path)) {
                    reports[i] = eval_report_from_json(read_json_file(result_path).at("evaluation"));
                    notify(item.source_id, "cached");
                    continue;
                }
                const auto slide = item.load();
                const auto output = run_pipeline_detailed(slide.image, cfg, item.source_id);
                const auto report = evaluate(output.instances, slide.truth);
                if (!result_path.empty()) {
                    auto doc = metrics_json(output.instances, cfg, cfg.record_timings ? &output.timings : nullptr);
                    doc["evaluation"] = to_json(report);
                    write_json_file(doc, result_path);
                }
                reports[i] = report;
                notify(item.source_id, "ok");
            } catch (const std::exception& e) {
                errors[i] = e.what();
                notify(item.source_id, std::string("failed: ") + e.what());
            }
        }
    };

    const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(items.size())));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
        worker();
    }

    CorpusSummary summary;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (reports[i]) {
            summary.results.push_back({items[i].source_id, *reports[i]});
        } else {
            summary.failures.push_back({items[i].source_id, errors[i]});
        }
    }
    auto by_id = [](const auto& a, const auto& b) { return a.source_id < b.source_id; };
    std::sort(summary.results.begin(), summary.results.end(), by_id);
    std::sort(summary.failures.begin(), summary.failures.end(), by_id);

    std::vector<double> semantic, instance;
    double count_error = 0;
    for (const auto& r : summary.results) {
        semantic.push_back(r.report.semantic_iou);
        instance.push_back(r.report.mean_matched_instance_iou);
        count_error += r.report.count_error();
    }
    summary.semantic_iou = summarize(semantic);
    summary.instance_iou = summarize(instance);
    summary.mean_count_error = summary.results.empty() ? 0.0 : count_error / static_cast<double>(summary.results.size());

    if (!options.out_dir.empty()) write_json_file(to_json(summary), options.out_dir / "summary.json");
    return summary;
}

} // namespace leukoseg
