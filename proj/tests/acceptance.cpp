// One PASS/FAIL line per end-to-end requirement. Exit status is the number of failures.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <regex>
#include <set>
#include <thread>

#include "support.hpp"

using namespace leukoseg;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
    std::printf("%s [%d] %s: %s\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

void corpus_quality() {
    CorpusSpec spec;
    spec.n_slides = 50;
    spec.n_cells_min = 5;
    spec.n_cells_max = 12;
    spec.slide.width = spec.slide.height = 512;
    spec.slide.overlap_pairs = 1;
    spec.slide.seed = 42;
    CorpusOptions opts;
    opts.jobs = 1;
    const auto start = std::chrono::steady_clock::now();
    const auto s = run_corpus(synthetic_items(spec), {}, opts);
    const double total = seconds_since(start);
    const double per_slide = total / spec.n_slides;
    const bool pass = s.failures.empty() && s.semantic_iou.mean >= 0.75 && s.instance_iou.mean >= 0.70 &&
                      s.mean_count_error <= 0.10 && per_slide <= 2.0 && total <= 120.0;
    report(1, pass, "synthetic corpus (50 slides, seed 42)",
           fmt("semantic IoU %.4f (>=0.75), instance IoU %.4f (>=0.70), count error %.4f (<=0.10), "
               "%.3f s/slide (<=2), %.1f s total (<=120), %zu failed",
               s.semantic_iou.mean, s.instance_iou.mean, s.mean_count_error, per_slide, total, s.failures.size()));
}

void cmyk_suite() {
    bool ok = true;
    auto near = [&](double a, double b, double tol) { ok = ok && std::abs(a - b) <= tol; };
    const auto white = rgb_to_cmyk(255, 255, 255);
    near(white.c, 0, 1e-6), near(white.m, 0, 1e-6), near(white.y, 0, 1e-6), near(white.k, 0, 1e-6);
    const auto black = rgb_to_cmyk(0, 0, 0);
    near(black.c, 0, 1e-6), near(black.m, 0, 1e-6), near(black.y, 0, 1e-6), near(black.k, 1, 1e-6);
    const auto mid = rgb_to_cmyk(128, 64, 32);
    near(mid.k, 0.49804, 1e-5), near(mid.k, 127.0 / 255.0, 1e-6), near(mid.c, 0, 1e-6), near(mid.m, 0.5, 1e-6),
        near(mid.y, 0.75, 1e-6);
    const bool examples = ok;

    Gen gen(2024);
    double worst = 0;
    bool in_range = true;
    for (int i = 0; i < 1'000'000; ++i) {
        const auto r = gen.byte(), g = gen.byte(), b = gen.byte();
        const auto p = rgb_to_cmyk(r, g, b);
        for (double v : {p.c, p.m, p.y, p.k}) in_range = in_range && v >= 0 && v <= 1;
        if (p.k < 1) {
            worst = std::max({worst, std::abs((1 - p.c) * (1 - p.k) - r / 255.0),
                              std::abs((1 - p.m) * (1 - p.k) - g / 255.0), std::abs((1 - p.y) * (1 - p.k) - b / 255.0)});
        }
    }
    report(2, examples && in_range && worst <= 1e-9, "RGB to CMYK",
           fmt("hand examples %s (tol 1e-6); 1e6 random pixels in [0,1]^4: %s; worst inverse error %.2e (<=1e-9)",
               examples ? "match" : "MISMATCH", in_range ? "yes" : "NO", worst));
}

void oracle_suite() {
    Gen gen(3);
    const int cases = 200;
    int otsu_bad = 0, cc_bad = 0, dt_cases = 0;
    double dt_worst = 0;
    for (int i = 0; i < cases; ++i) {
        const auto img = gen.gray_image(gen.integer(1, 64), gen.integer(1, 64));
        otsu_bad += otsu_threshold(img) != otsu_oracle(histogram(img));
        const auto m = gen.any_mask(64);
        cc_bad += connected_components(m, Connectivity::four) != components_oracle(m, false);
        cc_bad += connected_components(m, Connectivity::eight) != components_oracle(m, true);
        if (count_true(m) == m.size()) continue; // no background: distance undefined
        ++dt_cases;
        const auto fast = distance_transform(m);
        const auto slow = distance_oracle(m);
        for (std::size_t k = 0; k < m.size(); ++k) dt_worst = std::max(dt_worst, std::abs(fast[k] - slow[k]));
    }
    report(3, otsu_bad == 0 && cc_bad == 0 && dt_worst <= 1e-6 && dt_cases >= 100,
           "Otsu / connected components / distance transform vs brute force",
           fmt("%d cases up to 64x64: Otsu mismatches %d, CC mismatches %d (4- and 8-connected), "
               "DT worst error %.2e over %d cases (<=1e-6)",
               cases, otsu_bad, cc_bad, dt_worst, dt_cases));
}

void closing_suite() {
    Gen gen(4);
    int idempotent_bad = 0, extensive_bad = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto m = gen.any_mask(40);
        const StructuringElement se{gen.chance(0.5) ? ElementShape::ellipse : ElementShape::square, gen.integer(1, 4)};
        const auto c = close(m, se);
        idempotent_bad += close(c, se) != c;
        extensive_bad += count_true(mask_diff(m, c)) != 0;
    }
    report(4, idempotent_bad == 0 && extensive_bad == 0, "closing idempotent and extensive",
           fmt("1000 random masks: %d not idempotent, %d not extensive", idempotent_bad, extensive_bad));
}

FloatPlane plane_of(const std::vector<double>& v) {
    FloatPlane p(static_cast<int>(v.size()), 1);
    std::copy(v.begin(), v.end(), p.data().begin());
    return p;
}

void kmeans_suite() {
    Gen gen(5);
    int rising = 0, suboptimal = 0, nondeterministic = 0;
    for (int trial = 0; trial < 300; ++trial) {
        FloatPlane p(gen.integer(3, 40), gen.integer(1, 20));
        for (auto& v : p.data()) v = std::round(gen.real(0, 255));
        const BinaryMask all(p.width(), p.height(), 1);
        KMeansConfig cfg;
        cfg.init = gen.chance(0.5) ? KMeansInit::quantile : KMeansInit::random;
        cfg.seed = gen.engine()();
        std::set<double> distinct(p.data().begin(), p.data().end());
        if (distinct.size() < 3) continue;
        const auto out = kmeans_1d(p, all, cfg);
        for (std::size_t i = 1; i < out.inertia_history.size(); ++i)
            rising += out.inertia_history[i] > out.inertia_history[i - 1] * (1 + 1e-12) + 1e-9;
        nondeterministic += kmeans_1d(p, all, cfg).assignments != out.assignments;
    }
    const int triples = 500;
    for (int trial = 0; trial < triples; ++trial) {
        const double spread = gen.real(0.5, 3.0);
        double centre = gen.real(-50, 50);
        std::vector<double> v;
        for (int g = 0; g < 3; ++g) {
            const int n = gen.integer(1, 12);
            for (int i = 0; i < n; ++i) v.push_back(centre + gen.real(-spread, spread));
            centre += gen.real(24 * spread, 60 * spread);
        }
        std::shuffle(v.begin(), v.end(), gen.engine());
        const auto out = kmeans_1d(plane_of(v), BinaryMask(static_cast<int>(v.size()), 1, 1), {});
        const auto best = best_contiguous_partition(v);
        auto sorted = v;
        std::sort(sorted.begin(), sorted.end());
        bool same = std::abs(out.inertia - best.cost) <= 1e-9 * std::max(1.0, best.cost);
        for (std::size_t i = 0; i < v.size() && same; ++i) {
            const auto rank = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), v[i]) - sorted.begin());
            const unsigned group = rank < best.first_end ? 1 : rank < best.second_end ? 2 : 3;
            same = out.assignments[i] == group;
        }
        suboptimal += !same;
    }

    // the same inputs clustered from several threads at once, and through the corpus runner at 1 and 4 jobs
    FloatPlane shared(64, 64);
    for (auto& v : shared.data()) v = std::round(gen.real(0, 255));
    const BinaryMask all(64, 64, 1);
    const auto reference = kmeans_1d(shared, all, {});
    std::vector<int> differs(4, 0);
    {
        std::vector<std::jthread> pool;
        for (int t = 0; t < 4; ++t)
            pool.emplace_back([&, t] {
                for (int r = 0; r < 5; ++r) differs[static_cast<std::size_t>(t)] += kmeans_1d(shared, all, {}).assignments != reference.assignments;
            });
    }
    for (int d : differs) nondeterministic += d;
    CorpusSpec spec;
    spec.n_slides = 6;
    spec.n_cells_min = 2;
    spec.n_cells_max = 4;
    spec.slide.width = spec.slide.height = 192;
    spec.slide.radius_min = 16;
    spec.slide.radius_max = 24;
    spec.slide.overlap_pairs = 1;
    CorpusOptions one, four;
    four.jobs = 4;
    const auto items = synthetic_items(spec);
    nondeterministic += to_json(run_corpus(items, {}, one)) != to_json(run_corpus(items, {}, four));

    report(5, rising == 0 && suboptimal == 0 && nondeterministic == 0, "k-means",
           fmt("inertia rises %d; separated triples off the brute-force optimum %d/%d; nondeterministic runs %d "
               "(repeat, 4 threads, corpus at 1 vs 4 jobs)",
               rising, suboptimal, triples, nondeterministic));
}

LabelMap labels_from_rows(const std::vector<std::string>& rows) {
    LabelMap out(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) {
            const char c = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
            out(x, y) = c == '.' ? 0u : static_cast<std::uint32_t>(c - '0');
        }
    return out;
}

FloatPlane negated_distance(const BinaryMask& m) {
    auto d = distance_transform(m);
    for (auto& v : d.data()) v = -v;
    return d;
}

bool watershed_invariants(const WatershedResult& r, const LabelMap& seeds, const BinaryMask& domain) {
    for (std::size_t i = 0; i < domain.size(); ++i) {
        const bool labelled = r.labels[i] != 0, line = r.boundary[i] != 0;
        if (domain[i] ? labelled == line : labelled || line) return false;
        if (seeds[i] && r.labels[i] != seeds[i]) return false;
    }
    return labels_connected(r.labels) && std::is_sorted(r.flood_levels.begin(), r.flood_levels.end());
}

void watershed_suite() {
    std::vector<std::string> fixture_notes;

    const auto blobs = mask_from_rows({"###....", "###..##", "###..##"});
    const auto blob_ws = watershed(FloatPlane(7, 3), labels_from_rows({".......", ".1.....", "......2"}), blobs);
    const bool blobs_ok = blob_ws.labels == labels_from_rows({"111....", "111..22", "111..22"}) &&
                          count_true(blob_ws.boundary) == 0;
    fixture_notes.push_back(std::string("disjoint blobs ") + (blobs_ok ? "exact" : "WRONG"));

    const auto flat = watershed(FloatPlane(6, 3), labels_from_rows({"1....2", "1....2", "1....2"}), BinaryMask(6, 3, 1));
    const bool flat_ok = flat.labels == labels_from_rows({"111.22", "111.22", "111.22"}) &&
                         flat.boundary == mask_from_rows({"...#..", "...#..", "...#.."});
    fixture_notes.push_back(std::string("flat 6x3 ") + (flat_ok ? "exact" : "WRONG"));

    const auto pair = mask_or(disk_mask(48, 32, 16, 16, 8), disk_mask(48, 32, 30, 16, 8));
    const auto seeds = extract_seeds(pair, {});
    const auto split = watershed(negated_distance(pair), seeds, pair);
    bool neck_only = true;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 48; ++x)
            if (split.boundary(x, y) && (x < 21 || x > 25)) neck_only = false;
    const bool disks_ok = label_count(seeds) == 2 && label_count(split.labels) == 2 && seeds(16, 16) != 0 &&
                          seeds(30, 16) != 0 && split.labels(16, 16) != split.labels(30, 16) &&
                          count_true(split.boundary) > 0 && neck_only && watershed_invariants(split, seeds, pair);
    fixture_notes.push_back(std::string("merged disks ") + (disks_ok ? "split on the neck" : "WRONG"));

    Gen gen(6);
    int broken = 0, trials = 0;
    while (trials < 500) {
        const int w = gen.integer(4, 48), h = gen.integer(4, 48);
        const auto domain = gen.blob_mask(w, h, gen.integer(1, 5), 2.0, 12.0);
        const auto comps = connected_components(domain);
        const auto ncomp = label_count(comps);
        if (ncomp == 0) continue;
        std::vector<std::vector<std::size_t>> members(ncomp + 1);
        for (std::size_t i = 0; i < comps.size(); ++i) members[comps[i]].push_back(i);
        LabelMap s(w, h);
        std::uint32_t next = 0;
        for (std::uint32_t c = 1; c <= ncomp; ++c) {
            const int n = gen.integer(1, 3);
            for (int k = 0; k < n; ++k) {
                const auto& pool = members[c];
                const auto centre = pool[static_cast<std::size_t>(gen.integer(0, static_cast<int>(pool.size()) - 1))];
                if (s[centre]) continue;
                s[centre] = ++next;
                const int cx = static_cast<int>(centre % static_cast<std::size_t>(w));
                const int cy = static_cast<int>(centre / static_cast<std::size_t>(w));
                for (int y = cy - 1; y <= cy + 1; ++y)
                    for (int x = cx - 1; x <= cx + 1; ++x)
                        if (gen.chance(0.5) && s.contains(x, y) && comps(x, y) == c && !s(x, y)) s(x, y) = next;
            }
        }
        FloatPlane surface = gen.chance(0.5) ? negated_distance(domain) : FloatPlane(w, h);
        if (gen.chance(0.3))
            for (auto& v : surface.data()) v = gen.real(-5, 5);
        const auto r = watershed(surface, s, domain);
        broken += !watershed_invariants(r, s, domain) || count_true(r.unreached) != 0 || watershed(surface, s, domain) != r;
        ++trials;
    }
    std::string notes;
    for (const auto& n : fixture_notes) notes += n + "; ";
    report(6, blobs_ok && flat_ok && disks_ok && broken == 0, "watershed fixtures and invariants",
           notes + fmt("%d/%d random seeded masks violate partition/seed/connectivity/monotone/determinism", broken,
                       trials));
}

void overlap_suite() {
    CorpusSpec spec;
    spec.n_slides = 20;
    spec.n_cells_min = spec.n_cells_max = 2;
    spec.slide.width = spec.slide.height = 192;
    spec.slide.overlap_pairs = 1;
    spec.slide.overlap_distance = 1.4;
    spec.slide.seed = 7;
    int exact = 0, touching = 0;
    for (int i = 0; i < spec.n_slides; ++i) {
        const auto slide = generate_slide(spec.slide_config(i));
        touching += label_count(connected_components(slide.truth.semantic)) == 1;
        try {
            exact += run_pipeline(slide.image, {}).instances.size() == 2;
        } catch (const Error&) {
        }
    }
    report(7, exact >= 18 && touching == 20, "touching pairs split in two",
           fmt("%d/20 fixtures give exactly 2 instances (>=18); %d/20 fixtures are one connected blob", exact,
               touching));
}

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::ifstream in(e.path(), std::ios::binary);
        out[e.path().filename().string()] = std::string(std::istreambuf_iterator<char>(in), {});
    }
    return out;
}

void determinism_suite() {
    CorpusSpec spec;
    spec.slide.seed = 42;
    spec.slide.overlap_pairs = 1;
    const auto slide = generate_slide(spec.slide_config(3));
    PipelineConfig cfg;
    cfg.emit = {Emit::labelmap, Emit::overlay, Emit::contours, Emit::crops, Emit::masks, Emit::metrics_json};
    TempDir a("accept_a"), b("accept_b");
    for (const auto* dir : {&a, &b}) {
        const auto out = run_pipeline_detailed(slide.image, cfg, "slide");
        render_outputs(slide.image, out.instances, out.watershed, cfg, dir->path());
    }
    const auto first = directory_bytes(a.path()), second = directory_bytes(b.path());
    std::size_t crops = 0;
    for (const auto& [name, bytes] : first)
        crops += std::regex_match(name, std::regex(R"(slide_\d+\.png)"));
    const bool has_all = first.count("slide_labels.png") && first.count("slide_metrics.json") && crops > 0;
    report(8, has_all && first == second, "byte-identical outputs",
           fmt("%zu files (label map, %zu crops, metrics JSON, overlays, masks) %s across two runs", first.size(),
               crops, first == second ? "identical" : "DIFFER"));
}

void dump_suite() {
    CorpusSpec spec;
    spec.slide.seed = 42;
    spec.slide.overlap_pairs = 1;
    const auto slide = generate_slide(spec.slide_config(0));
    TempDir dir("accept_dump");
    const auto written = dump_stages(slide.image, {}, dir.path());
    std::set<std::string> names;
    for (const auto& p : written) names.insert(p.filename().string().substr(3, p.filename().string().size() - 7));
    const std::vector<std::string> wanted = {"y_equalized", "y_thresholded", "m_closed",     "semantic_and",
                                             "cluster_1",   "cluster_2",     "cluster_3",    "seeds",
                                             "watershed_labels"};
    std::string missing;
    for (const auto& w : wanted)
        if (!names.count(w)) missing += " " + w;
    bool on_disk = true;
    for (const auto& p : written) on_disk = on_disk && fs::exists(p);
    report(9, missing.empty() && on_disk && names.size() == written.size(), "dump-stages artifact classes",
           fmt("%zu distinct files written; missing:%s", written.size(), missing.empty() ? " none" : missing.c_str()));
}

} // namespace

int main() {
    const std::vector<void (*)()> suites = {corpus_quality, cmyk_suite,     oracle_suite,  closing_suite, kmeans_suite,
                                            watershed_suite, overlap_suite, determinism_suite, dump_suite};
    for (std::size_t i = 0; i < suites.size(); ++i) {
        try {
            suites[i]();
        } catch (const std::exception& e) {
            report(static_cast<int>(i + 1), false, "requirement", std::string("threw: ") + e.what());
        }
    }
    std::printf("%d of %zu criteria failed\n", failures, suites.size());
    return failures == 0 ? 0 : 1;
}
