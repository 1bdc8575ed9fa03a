#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "leukoseg/error.hpp"
#include "leukoseg/raster.hpp"

namespace leukoseg {

enum class KMeansInit { quantile, random };

struct KMeansConfig {
    int k = 3;
    int max_iterations = 100;
    double tolerance = 1e-4;
    std::uint64_t seed = 42;
    KMeansInit init = KMeansInit::quantile;

    void validate() const {
        if (k < 1) throw Error(ErrorCode::invalid_argument, "kmeans k must be >= 1");
        if (max_iterations < 1) throw Error(ErrorCode::invalid_argument, "kmeans max-iterations must be >= 1");
        if (!(tolerance > 0.0)) throw Error(ErrorCode::invalid_argument, "kmeans tolerance must be > 0");
    }
};

/// Result of 1-D k-means. Centroids are ascending and cluster j carries label j+1.
struct ClusterOutcome {
    std::vector<double> centroids;
    LabelMap assignments; // 0 outside the clustering domain
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> inertia_history; // cost after each assignment step

    int k() const noexcept { return static_cast<int>(centroids.size()); }

    BinaryMask cluster_mask(std::uint32_t label) const { return mask_of_label(assignments, label); }

    friend bool operator==(const ClusterOutcome&, const ClusterOutcome&) = default;
};

namespace kmeans_detail {

// Distinct in-domain values with multiplicities, ascending.
struct WeightedValues {
    std::vector<double> value;
    std::vector<std::uint64_t> weight;
    std::uint64_t total = 0;
};

inline WeightedValues collect(const FloatPlane& values, const BinaryMask& domain) {
    std::vector<double> samples;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (domain[i]) samples.push_back(values[i]);
    std::sort(samples.begin(), samples.end());
    WeightedValues out;
    out.total = samples.size();
    for (double s : samples) {
        if (!out.value.empty() && out.value.back() == s) {
            ++out.weight.back();
        } else {
            out.value.push_back(s);
            out.weight.push_back(1);
        }
    }
    return out;
}

// Nearest centroid; ties resolve to the lower index.
inline int nearest(const std::vector<double>& centroids, double v) {
    int best = 0;
    double best_d = std::abs(v - centroids[0]);
    for (int j = 1; j < static_cast<int>(centroids.size()); ++j) {
        const double d = std::abs(v - centroids[static_cast<std::size_t>(j)]);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

inline std::vector<double> quantile_init(const WeightedValues& data, int k) {
    const auto d = static_cast<int>(data.value.size());
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        const double q = (2.0 * j + 1.0) / (2.0 * k);
        const auto rank = static_cast<std::uint64_t>(std::floor(q * static_cast<double>(data.total - 1)));
        std::uint64_t run = 0;
        int pos = 0;
        while (run + data.weight[static_cast<std::size_t>(pos)] <= rank) run += data.weight[static_cast<std::size_t>(pos++)];
        idx[static_cast<std::size_t>(j)] = pos;
    }
    // heavy ties can map several quantiles onto one value; spread them over distinct values
    for (int j = 1; j < k; ++j)
        idx[static_cast<std::size_t>(j)] = std::max(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(j - 1)] + 1);
    for (int j = k - 1; j >= 0; --j) {
        idx[static_cast<std::size_t>(j)] = std::min(idx[static_cast<std::size_t>(j)], d - k + j);
        if (j + 1 < k)
            idx[static_cast<std::size_t>(j)] = std::min(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(j + 1)] - 1);
    }
    std::vector<double> centroids;
    for (int i : idx) centroids.push_back(data.value[static_cast<std::size_t>(i)]);
    return centroids;
}

inline std::vector<double> random_init(const WeightedValues& data, int k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(data.value.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    // partial Fisher-Yates; modulo draw keeps the sequence identical across standard libraries
    for (int j = 0; j < k; ++j) {
        const auto remaining = order.size() - static_cast<std::size_t>(j);
        const auto pick = static_cast<std::size_t>(j) + static_cast<std::size_t>(rng() % remaining);
        std::swap(order[static_cast<std::size_t>(j)], order[pick]);
    }
    std::vector<double> centroids;
    for (int j = 0; j < k; ++j) centroids.push_back(data.value[order[static_cast<std::size_t>(j)]]);
    std::sort(centroids.begin(), centroids.end());
    return centroids;
}

// Farthest-first: the extremes, then repeatedly the value farthest from every
// centroid so far. Catches small groups that quantiles skip over.
inline std::vector<double> farthest_init(const WeightedValues& data, int k) {
    std::vector<double> centroids{data.value.front()};
    if (k > 1) centroids.push_back(data.value.back());
    while (static_cast<int>(centroids.size()) < k) {
        double best = -1;
        double pick = data.value.front();
        for (double v : data.value) {
            double d = std::numeric_limits<double>::infinity();
            for (double c : centroids) d = std::min(d, std::abs(v - c));
            if (d > best) {
                best = d;
                pick = v;
            }
        }
        centroids.push_back(pick);
    }
    std::sort(centroids.begin(), centroids.end());
    return centroids;
}

inline double assignment_cost(const WeightedValues& data, const std::vector<double>& centroids,
                              std::vector<int>& assignment) {
    long double cost = 0;
    for (std::size_t i = 0; i < data.value.size(); ++i) {
        assignment[i] = nearest(centroids, data.value[i]);
        const long double diff = data.value[i] - centroids[static_cast<std::size_t>(assignment[i])];
        cost += diff * diff * data.weight[i];
    }
    return static_cast<double>(cost);
}

struct LloydRun {
    std::vector<double> centroids;
    std::vector<int> assignment; // per distinct value
    std::vector<double> history;
    int iterations = 0;
    double inertia = 0;
};

inline LloydRun lloyd(const WeightedValues& data, std::vector<double> centroids, const KMeansConfig& cfg) {
    LloydRun run;
    run.assignment.resize(data.value.size());
    auto& assignment = run.assignment;
    const auto k = centroids.size();
    for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
        run.history.push_back(assignment_cost(data, centroids, assignment));

        std::vector<long double> sums(k, 0);
        std::vector<std::uint64_t> counts(k, 0);
        for (std::size_t i = 0; i < data.value.size(); ++i) {
            const auto j = static_cast<std::size_t>(assignment[i]);
            sums[j] += static_cast<long double>(data.value[i]) * data.weight[i];
            counts[j] += data.weight[i];
        }
        std::vector<double> next = centroids;
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) next[j] = static_cast<double>(sums[j] / counts[j]);
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) continue;
            // empty cluster: move it onto the worst-served value
            double worst = -1;
            std::size_t worst_i = 0;
            for (std::size_t i = 0; i < data.value.size(); ++i) {
                const double dist = std::abs(data.value[i] - next[static_cast<std::size_t>(assignment[i])]);
                const bool taken = std::find(next.begin(), next.end(), data.value[i]) != next.end();
                if (!taken && dist > worst) {
                    worst = dist;
                    worst_i = i;
                }
            }
            next[j] = data.value[worst_i];
        }
        double movement = 0;
        for (std::size_t j = 0; j < k; ++j) movement = std::max(movement, std::abs(next[j] - centroids[j]));
        std::sort(next.begin(), next.end());
        centroids = std::move(next);
        run.iterations = iter;
        if (movement < cfg.tolerance) break;
    }
    run.inertia = assignment_cost(data, centroids, assignment);
    run.history.push_back(run.inertia);
    run.centroids = std::move(centroids);
    return run;
}

} // namespace kmeans_detail

/// Lloyd's k-means on the in-domain samples of a real-valued plane. Quantile
/// init also tries a farthest-first start and keeps whichever ends lower.
inline ClusterOutcome kmeans_1d(const FloatPlane& values, const BinaryMask& domain, const KMeansConfig& cfg) {
    cfg.validate();
    require_same_shape(values, domain, "kmeans_1d");
    const auto data = kmeans_detail::collect(values, domain);
    if (data.total == 0) throw Error(ErrorCode::empty_domain, "kmeans_1d: domain has no pixels");
    if (data.value.size() < static_cast<std::size_t>(cfg.k)) {
        throw Error(ErrorCode::too_few_distinct_values, "kmeans_1d: " + std::to_string(data.value.size()) +
                                                            " distinct values for k=" + std::to_string(cfg.k));
    }

    kmeans_detail::LloydRun run;
    if (cfg.init == KMeansInit::quantile) {
        run = kmeans_detail::lloyd(data, kmeans_detail::quantile_init(data, cfg.k), cfg);
        auto alt = kmeans_detail::lloyd(data, kmeans_detail::farthest_init(data, cfg.k), cfg);
        if (alt.inertia < run.inertia) run = std::move(alt);
    } else {
        run = kmeans_detail::lloyd(data, kmeans_detail::random_init(data, cfg.k, cfg.seed), cfg);
    }

    ClusterOutcome out;
    out.centroids = run.centroids;
    out.inertia = run.inertia;
    out.iterations = run.iterations;
    out.inertia_history = std::move(run.history);
    out.assignments = LabelMap(values.width(), values.height());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!domain[i]) continue;
        const auto pos = std::lower_bound(data.value.begin(), data.value.end(), values[i]) - data.value.begin();
        out.assignments[i] = static_cast<std::uint32_t>(run.assignment[static_cast<std::size_t>(pos)] + 1);
    }
    return out;
}

/// |a & b| / |a | b|, and 1 when both are empty.
inline double iou(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b, "iou");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] && b[i];
        uni += a[i] || b[i];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Cluster labels (1-based) assigned to each tissue role.
struct RoleAssignment {
    std::uint32_t nucleus = 0;
    std::uint32_t cytoplasm = 0;
    std::uint32_t background = 0;
    std::array<double, 3> iou_scores{};

    friend bool operator==(const RoleAssignment&, const RoleAssignment&) = default;
};

/// Highest IoU against the rough nucleus mask is the nucleus, lowest is the
/// background, the remaining cluster is cytoplasm. Ties favour the darker
/// centroid for nucleus and the lighter one for background.
inline RoleAssignment resolve_roles(const ClusterOutcome& outcome, const BinaryMask& rough_nucleus) {
    if (outcome.k() != 3) throw Error(ErrorCode::k_not_3, "resolve_roles needs exactly three clusters");
    require_same_shape(outcome.assignments, rough_nucleus, "resolve_roles");

    RoleAssignment roles;
    for (std::uint32_t c = 1; c <= 3; ++c) {
        roles.iou_scores[c - 1] = iou(outcome.cluster_mask(c), rough_nucleus);
    }
    // labels follow ascending centroids, so a lower label is a darker centroid
    std::uint32_t nucleus = 1;
    for (std::uint32_t c = 2; c <= 3; ++c)
        if (roles.iou_scores[c - 1] > roles.iou_scores[nucleus - 1]) nucleus = c;
    std::uint32_t background = 0;
    for (std::uint32_t c = 3; c >= 1; --c) {
        if (c == nucleus) continue;
        if (background == 0 || roles.iou_scores[c - 1] < roles.iou_scores[background - 1]) background = c;
    }
    roles.nucleus = nucleus;
    roles.background = background;
    roles.cytoplasm = 6 - nucleus - background;
    return roles;
}

} // namespace leukoseg
