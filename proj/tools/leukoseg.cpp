// leukoseg command-line front end.
//
// Exit codes: 0 everything succeeded, 1 some inputs failed, 2 usage or
// configuration error.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "leukoseg/leukoseg.hpp"

namespace fs = std::filesystem;
using namespace leukoseg;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

// Thrown for anything the user has to fix on the command line or in a config file.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("leukoseg");
    logger->set_pattern("%^%l%$: %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("LEUKOSEG_LOG")) {
        const auto level = spdlog::level::from_str(env);
        // from_str maps unknown names to off; only honour it when asked for literally
        if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
        else spdlog::warn("LEUKOSEG_LOG: unknown level '{}', using info", env);
    }
}

std::string join(const Json& names) {
    std::string out;
    for (const auto& n : names) out += (out.empty() ? "" : ",") + n.get<std::string>();
    return out;
}

// Pipeline knobs shared by segment, corpus and dump-stages. Values given on the
// command line override the config file, which overrides the built-in defaults.
struct ConfigFlags {
    PipelineConfig defaults;
    std::string config_file;
    int se_radius = defaults.se_radius;
    Json echoed = to_json(defaults);
    std::string se_shape = echoed["se_shape"];
    double dt_fraction = defaults.seeds.dt_fraction;
    int min_seed_area = defaults.seeds.min_seed_area;
    int min_cell_area = defaults.min_cell_area;
    std::string cluster_channel = echoed["cluster_channel"];
    std::string cluster_domain = echoed["cluster_domain"];
    std::uint64_t kmeans_seed = defaults.kmeans.seed;
    std::string emit = join(echoed["emit"]);
    bool record_timings = false;

    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* app, bool with_emit) {
        options["config"] = app->add_option("--config", config_file, "JSON pipeline config")->check(CLI::ExistingFile);
        options["se_radius"] =
            app->add_option("--se-radius", se_radius, "structuring element radius")->capture_default_str();
        options["se_shape"] = app->add_option("--se-shape", se_shape, "structuring element shape")
                                  ->check(CLI::IsMember({"ellipse", "square"}))
                                  ->capture_default_str();
        options["dt_fraction"] = app->add_option("--dt-fraction", dt_fraction,
                                                 "seed core cut, as a fraction of the peak distance")
                                     ->capture_default_str();
        options["min_seed_area"] =
            app->add_option("--min-seed-area", min_seed_area, "smallest seed kept, in pixels")->capture_default_str();
        options["min_cell_area"] = app->add_option("--min-cell-area", min_cell_area,
                                                   "instances smaller than this are merged or dropped")
                                       ->capture_default_str();
        options["cluster_channel"] = app->add_option("--cluster-channel", cluster_channel, "Lab channel for k-means")
                                         ->check(CLI::IsMember({"l", "a", "b"}))
                                         ->capture_default_str();
        options["cluster_domain"] = app->add_option("--cluster-domain", cluster_domain, "pixels fed to k-means")
                                        ->check(CLI::IsMember({"masked", "full-frame"}))
                                        ->capture_default_str();
        options["kmeans_seed"] =
            app->add_option("--kmeans-seed", kmeans_seed, "seed for random k-means init")->capture_default_str();
        options["record_timings"] =
            app->add_flag("--record-timings", record_timings, "write stage timings into the metrics JSON");
        if (with_emit) {
            options["emit"] = app->add_option("--emit", emit,
                                              "comma list of labelmap, overlay, contours, crops, masks, metrics-json")
                                  ->capture_default_str();
        }
    }

    bool given(const std::string& name) const {
        const auto it = options.find(name);
        return it != options.end() && it->second->count() > 0;
    }

    PipelineConfig resolve() const {
        PipelineConfig cfg;
        try {
            if (!config_file.empty()) cfg = pipeline_config_from_json(read_json_file(config_file), cfg);
            Json overrides = Json::object();
            if (given("se_radius")) overrides["se_radius"] = se_radius;
            if (given("se_shape")) overrides["se_shape"] = se_shape;
            if (given("dt_fraction")) overrides["seeds"]["dt_fraction"] = dt_fraction;
            if (given("min_seed_area")) overrides["seeds"]["min_seed_area"] = min_seed_area;
            if (given("min_cell_area")) overrides["min_cell_area"] = min_cell_area;
            if (given("cluster_channel")) overrides["cluster_channel"] = cluster_channel;
            if (given("cluster_domain")) overrides["cluster_domain"] = cluster_domain;
            if (given("kmeans_seed")) overrides["kmeans"]["seed"] = kmeans_seed;
            if (given("record_timings")) overrides["record_timings"] = record_timings;
            cfg = pipeline_config_from_json(overrides, cfg);
            if (given("emit")) cfg.emit = parse_emit_list(emit);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        return cfg;
    }
};

// Files whose name does not depend on the instance count; their presence
// marks an input as already processed.
std::vector<fs::path> fixed_outputs(const fs::path& out, const std::string& id, const EmitSet& emit) {
    std::vector<fs::path> paths;
    if (emit.has(Emit::labelmap)) paths.push_back(out / OutputNames::labelmap(id));
    if (emit.has(Emit::overlay)) paths.push_back(out / OutputNames::overlay(id));
    if (emit.has(Emit::contours)) paths.push_back(out / OutputNames::contours(id));
    if (emit.has(Emit::metrics_json)) paths.push_back(out / OutputNames::metrics(id));
    return paths;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
}

int cmd_segment(const std::vector<std::string>& inputs, const fs::path& out, unsigned jobs, bool force,
                const ConfigFlags& flags) {
    if (inputs.empty()) throw UsageError("segment: no input images given");
    const auto cfg = flags.resolve();

    std::map<std::string, std::string> seen;
    for (const auto& input : inputs) {
        const auto id = fs::path(input).stem().string();
        if (auto [it, fresh] = seen.emplace(id, input); !fresh) {
            throw UsageError("segment: inputs '" + it->second + "' and '" + input + "' share the id '" + id + "'");
        }
    }
    fs::create_directories(out);

    std::mutex log_lock;
    std::atomic<int> failures{0};
    parallel_for(inputs.size(), jobs, [&](std::size_t i) {
        const auto& input = inputs[i];
        const auto id = fs::path(input).stem().string();
        try {
            const auto fixed = fixed_outputs(out, id, cfg.emit);
            if (!force && !fixed.empty() &&
                std::all_of(fixed.begin(), fixed.end(), [](const fs::path& p) { return fs::exists(p); })) {
                std::lock_guard lock(log_lock);
                spdlog::info("{}: outputs present, skipped (use --force to redo)", input);
                return;
            }
            const auto img = load_image(input);
            const auto result = run_pipeline_detailed(img, cfg, id);
            const auto written = render_outputs(img, result.instances, result.watershed, cfg, out, &result.timings);
            std::lock_guard lock(log_lock);
            spdlog::info("{}: {} instances, {} files", input, result.instances.instances.size(), written.size());
        } catch (const std::exception& e) {
            ++failures;
            std::lock_guard lock(log_lock);
            spdlog::error("{}: {}", input, e.what());
        }
    });
    if (failures > 0) {
        spdlog::error("{} of {} inputs failed", failures.load(), inputs.size());
        return kFailed;
    }
    return kOk;
}

CorpusSpec load_corpus_spec(const fs::path& path) {
    try {
        return corpus_spec_from_json(read_json_file(path));
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

int cmd_synth(const fs::path& spec_path, const fs::path& out) {
    const auto spec = load_corpus_spec(spec_path);
    const auto ids = write_synthetic_corpus(spec, out);
    spdlog::info("wrote {} slides to {}", ids.size(), out.string());
    return kOk;
}

// Compares `<id>_labels.png` in `pred` against `<id>_instances.png` in `truth`,
// or two label images directly when both paths are files.
int cmd_eval(const fs::path& pred, const fs::path& truth, const std::string& out_file) {
    std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
    if (fs::is_regular_file(pred) && fs::is_regular_file(truth)) {
        pairs.push_back({pred.stem().string(), {pred, truth}});
    } else if (fs::is_directory(pred) && fs::is_directory(truth)) {
        const std::string suffix = "_instances.png";
        std::vector<std::string> ids;
        for (const auto& entry : fs::directory_iterator(truth)) {
            const auto name = entry.path().filename().string();
            if (name.size() > suffix.size() && name.ends_with(suffix)) ids.push_back(name.substr(0, name.size() - suffix.size()));
        }
        std::sort(ids.begin(), ids.end());
        for (const auto& id : ids)
            pairs.push_back({id, {pred / OutputNames::labelmap(id), truth / TruthNames::instances(id)}});
    } else {
        throw UsageError("eval: --pred and --truth must both be files or both be directories");
    }
    if (pairs.empty()) throw UsageError("eval: no ground-truth label maps found in " + truth.string());

    CorpusSummary summary;
    std::vector<double> semantic, instance;
    double count_error = 0;
    for (const auto& [id, paths] : pairs) {
        try {
            const auto report = evaluate(load_label_map(paths.first), load_label_map(paths.second));
            summary.results.push_back({id, report});
            semantic.push_back(report.semantic_iou);
            instance.push_back(report.mean_matched_instance_iou);
            count_error += report.count_error();
        } catch (const std::exception& e) {
            spdlog::error("{}: {}", id, e.what());
            summary.failures.push_back({id, e.what()});
        }
    }
    summary.semantic_iou = summarize(semantic);
    summary.instance_iou = summarize(instance);
    if (!summary.results.empty()) summary.mean_count_error = count_error / static_cast<double>(summary.results.size());

    Json doc = to_json(summary);
    if (pairs.size() == 1 && !summary.results.empty()) doc["evaluation"] = to_json(summary.results.front().report);
    if (!out_file.empty()) write_json_file(doc, out_file);
    std::cout << doc.dump(2) << "\n";
    return summary.failures.empty() ? kOk : kFailed;
}

int cmd_corpus(const std::string& spec_path, const std::string& dir, const fs::path& out, unsigned jobs, bool force,
               const ConfigFlags& flags) {
    const auto cfg = flags.resolve();
    std::vector<CorpusItem> items;
    try {
        items = spec_path.empty() ? directory_items(dir) : synthetic_items(load_corpus_spec(spec_path));
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (items.empty()) throw UsageError("corpus: no images to process");

    CorpusOptions options;
    options.out_dir = out;
    options.jobs = jobs;
    options.force = force;
    options.progress = [](const std::string& id, const std::string& status) {
        if (status.starts_with("failed")) spdlog::error("{}: {}", id, status);
        else spdlog::debug("{}: {}", id, status);
    };
    const auto summary = run_corpus(items, cfg, options);
    spdlog::info("{} images, mean semantic IoU {:.4f}, mean instance IoU {:.4f}, count error {:.4f}, {} failed",
                 summary.results.size(), summary.semantic_iou.mean, summary.instance_iou.mean,
                 summary.mean_count_error, summary.failures.size());
    return summary.failures.empty() ? kOk : kFailed;
}

int cmd_dump(const fs::path& image, const fs::path& out, const ConfigFlags& flags) {
    const auto cfg = flags.resolve();
    fs::create_directories(out);
    const auto img = load_image(image);
    try {
        const auto written = dump_stages(img, cfg, out);
        for (const auto& p : written) std::cout << p.filename().string() << "\n";
    } catch (const StageError& e) {
        spdlog::error("{}: {}", image.string(), e.what());
        return kFailed;
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"Unsupervised white-blood-cell instance segmentation"};
    app.require_subcommand(1);
    app.footer("Set LEUKOSEG_LOG to trace, debug, info, warn, error or off to change verbosity.");

    unsigned jobs = default_jobs();
    bool force = false;

    auto* segment = app.add_subcommand("segment", "segment images and write label maps, overlays and crops");
    std::vector<std::string> inputs;
    std::string segment_out = ".";
    ConfigFlags segment_flags;
    segment->add_option("inputs", inputs, "input images (PNG or PPM)");
    segment->add_option("--out", segment_out, "output directory")->capture_default_str();
    segment->add_option("--jobs", jobs, "images processed in parallel")->capture_default_str();
    segment->add_flag("--force", force, "redo inputs whose outputs already exist");
    segment_flags.attach(segment, true);

    auto* synth = app.add_subcommand("synth", "generate a synthetic slide corpus with ground truth");
    std::string synth_spec, synth_out;
    synth->add_option("--spec", synth_spec, "corpus spec JSON")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "score predicted label maps against ground truth");
    std::string eval_pred, eval_truth, eval_out;
    eval->add_option("--pred", eval_pred, "predicted label map, or directory of <id>_labels.png")->required();
    eval->add_option("--truth", eval_truth, "truth label map, or directory of <id>_instances.png")->required();
    eval->add_option("--out", eval_out, "also write the report to this JSON file");

    auto* corpus = app.add_subcommand("corpus", "segment and score a whole corpus");
    std::string corpus_spec, corpus_dir, corpus_out;
    ConfigFlags corpus_flags;
    auto* spec_opt = corpus->add_option("--spec", corpus_spec, "synthetic corpus spec JSON")->check(CLI::ExistingFile);
    auto* dir_opt = corpus->add_option("--dir", corpus_dir, "directory written by synth")->check(CLI::ExistingDirectory);
    spec_opt->excludes(dir_opt);
    corpus->add_option("--out", corpus_out, "directory for per-image and summary JSON")->required();
    corpus->add_option("--jobs", jobs, "images processed in parallel")->capture_default_str();
    corpus->add_flag("--force", force, "redo images that already have a result file");
    corpus_flags.attach(corpus, false);

    auto* dump = app.add_subcommand("dump-stages", "write every intermediate image of one run");
    std::string dump_image, dump_out;
    ConfigFlags dump_flags;
    dump->add_option("image", dump_image, "input image")->required();
    dump->add_option("--out", dump_out, "output directory")->required();
    dump_flags.attach(dump, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (jobs == 0) throw UsageError("--jobs must be at least 1");
        if (*segment) return cmd_segment(inputs, segment_out, jobs, force, segment_flags);
        if (*synth) return cmd_synth(synth_spec, synth_out);
        if (*eval) return cmd_eval(eval_pred, eval_truth, eval_out);
        if (*corpus) {
            if (corpus_spec.empty() == corpus_dir.empty()) throw UsageError("corpus: give exactly one of --spec or --dir");
            return cmd_corpus(corpus_spec, corpus_dir, corpus_out, jobs, force, corpus_flags);
        }
        if (*dump) return cmd_dump(dump_image, dump_out, dump_flags);
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kFailed;
    }
    return kUsage;
}
