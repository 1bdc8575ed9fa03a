#include <gtest/gtest.h>

#include "support.hpp"

using namespace leukoseg;
using namespace testing_support;

namespace {

FloatPlane negated_distance(const BinaryMask& m) {
    auto d = distance_transform(m);
    for (auto& v : d.data()) v = -v;
    return d;
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

// Partition, seed preservation, connectivity and monotone flooding.
void check_invariants(const WatershedResult& r, const LabelMap& seeds, const BinaryMask& domain) {
    for (std::size_t i = 0; i < domain.size(); ++i) {
        if (domain[i]) {
            ASSERT_NE(r.labels[i] != 0, r.boundary[i] != 0) << "pixel " << i;
        } else {
            ASSERT_EQ(r.labels[i], 0u);
            ASSERT_FALSE(r.boundary[i]);
        }
        if (seeds[i]) {
            ASSERT_EQ(r.labels[i], seeds[i]);
        }
    }
    ASSERT_TRUE(labels_connected(r.labels));
    ASSERT_TRUE(std::is_sorted(r.flood_levels.begin(), r.flood_levels.end()));
}

} // namespace

TEST(Seeds, EmptyMaskHasNone) {
    EXPECT_EQ(label_count(extract_seeds(BinaryMask(20, 20), {})), 0u);
}

TEST(Seeds, DiskGivesOneCentredSeed) {
    const auto disk = disk_mask(41, 41, 20, 20, 12);
    const auto seeds = extract_seeds(disk, {});
    ASSERT_EQ(label_count(seeds), 1u);
    EXPECT_EQ(seeds(20, 20), 1u);
    // the surviving core is the set the brute-force distance puts above half the peak
    const auto d = distance_oracle(disk);
    const double peak = *std::max_element(d.data().begin(), d.data().end());
    for (std::size_t i = 0; i < disk.size(); ++i) EXPECT_EQ(seeds[i] != 0, disk[i] && d[i] >= 0.5 * peak);
}

TEST(Seeds, MergedDisksGiveTwoSeeds) {
    // radius 8, centres 14 apart: the neck is narrower than half the peak distance
    const auto pair = mask_or(disk_mask(48, 32, 16, 16, 8), disk_mask(48, 32, 30, 16, 8));
    ASSERT_EQ(label_count(connected_components(pair)), 1u);
    const auto d = distance_oracle(pair);
    const double peak = *std::max_element(d.data().begin(), d.data().end());
    EXPECT_LT(d(23, 16), 0.5 * peak);
    const auto seeds = extract_seeds(pair, {});
    ASSERT_EQ(label_count(seeds), 2u);
    EXPECT_NE(seeds(16, 16), 0u);
    EXPECT_NE(seeds(30, 16), 0u);
    EXPECT_NE(seeds(16, 16), seeds(30, 16));
}

TEST(Seeds, SmallCoresDropped) {
    const auto disk = disk_mask(15, 15, 7, 7, 2.5);
    SeedConfig cfg;
    cfg.min_seed_area = 1000;
    EXPECT_EQ(label_count(extract_seeds(disk, cfg)), 0u);
    cfg.min_seed_area = 1;
    EXPECT_EQ(label_count(extract_seeds(disk, cfg)), 1u);
}

TEST(Seeds, ConfigChecked) {
    SeedConfig cfg;
    cfg.dt_fraction = 1.0;
    EXPECT_THROW(extract_seeds(BinaryMask(3, 3), cfg), Error);
    cfg.dt_fraction = 0.0;
    EXPECT_THROW(extract_seeds(BinaryMask(3, 3), cfg), Error);
    cfg = {};
    cfg.min_seed_area = 0;
    EXPECT_THROW(extract_seeds(BinaryMask(3, 3), cfg), Error);
}

TEST(Watershed, DisjointBlobsKeepTheirSeeds) {
    const auto domain = mask_from_rows({
        "###....",
        "###..##",
        "###..##",
    });
    const auto seeds = labels_from_rows({
        ".......",
        ".1.....",
        "......2",
    });
    const auto r = watershed(FloatPlane(7, 3), seeds, domain);
    EXPECT_EQ(r.labels, labels_from_rows({
                            "111....",
                            "111..22",
                            "111..22",
                        }));
    EXPECT_EQ(count_true(r.boundary), 0u);
    EXPECT_EQ(count_true(r.unreached), 0u);
}

TEST(Watershed, FlatRectangleTwoSeeds) {
    // flat surface, so absorption follows insertion order; the fronts meet at column 3
    const BinaryMask domain(6, 3, 1);
    const auto seeds = labels_from_rows({
        "1....2",
        "1....2",
        "1....2",
    });
    const auto r = watershed(FloatPlane(6, 3), seeds, domain);
    EXPECT_EQ(r.labels, labels_from_rows({
                            "111.22",
                            "111.22",
                            "111.22",
                        }));
    EXPECT_EQ(r.boundary, mask_from_rows({
                              "...#..",
                              "...#..",
                              "...#..",
                          }));
}

TEST(Watershed, SeedCoveringDomain) {
    const auto domain = disk_mask(12, 12, 6, 6, 5);
    LabelMap seeds(12, 12);
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = domain[i] ? 4 : 0;
    const auto r = watershed(negated_distance(domain), seeds, domain);
    EXPECT_EQ(r.labels, seeds);
    EXPECT_EQ(count_true(r.boundary), 0u);
}

TEST(Watershed, MergedDisksSplitAlongNeck) {
    const auto pair = mask_or(disk_mask(48, 32, 16, 16, 8), disk_mask(48, 32, 30, 16, 8));
    const auto seeds = extract_seeds(pair, {});
    const auto r = watershed(negated_distance(pair), seeds, pair);
    check_invariants(r, seeds, pair);
    EXPECT_EQ(label_count(r.labels), 2u);
    EXPECT_GT(count_true(r.boundary), 0u);
    // every line pixel sits on the neck between the two centres
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 48; ++x)
            if (r.boundary(x, y)) {
                EXPECT_GE(x, 21);
                EXPECT_LE(x, 25);
            }
    // the two sides are mirror images up to the tie-break
    const auto left = count_true(mask_of_label(r.labels, seeds(16, 16)));
    const auto right = count_true(mask_of_label(r.labels, seeds(30, 16)));
    EXPECT_LE(std::max(left, right) - std::min(left, right), 20u);
}

TEST(Watershed, SeedlessComponentIsUnreached) {
    const auto domain = mask_from_rows({"##..##", "##..##"});
    const auto seeds = labels_from_rows({"1.....", "......"});
    const auto r = watershed(FloatPlane(6, 2), seeds, domain);
    EXPECT_EQ(r.unreached, mask_from_rows({"....##", "....##"}));
    EXPECT_EQ(count_true(r.boundary), 0u);
}

TEST(Watershed, Errors) {
    const BinaryMask domain = mask_from_rows({"##.", "##."});
    try {
        watershed(FloatPlane(3, 2), LabelMap(3, 2), domain);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::empty_seeds);
    }
    try {
        watershed(FloatPlane(3, 2), labels_from_rows({"..1", "..."}), domain);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::seed_outside_domain);
    }
    EXPECT_THROW(watershed(FloatPlane(2, 2), LabelMap(3, 2), domain), Error);
}

TEST(Watershed, InvariantsOnRandomMasks) {
    Gen gen(61);
    for (int trial = 0; trial < 500; ++trial) {
        const int w = gen.integer(4, 48), h = gen.integer(4, 48);
        const auto domain = gen.blob_mask(w, h, gen.integer(1, 5), 2.0, 12.0);
        const auto comps = connected_components(domain);
        const auto ncomp = label_count(comps);
        if (ncomp == 0) continue;

        // one to three seeds per component, each a small connected square clipped to the component
        LabelMap seeds(w, h);
        std::uint32_t next = 0;
        std::vector<std::vector<std::size_t>> members(ncomp + 1);
        for (std::size_t i = 0; i < comps.size(); ++i) members[comps[i]].push_back(i);
        for (std::uint32_t c = 1; c <= ncomp; ++c) {
            const int n = gen.integer(1, 3);
            for (int s = 0; s < n; ++s) {
                const auto& pool = members[c];
                const auto centre = pool[static_cast<std::size_t>(gen.integer(0, static_cast<int>(pool.size()) - 1))];
                if (seeds[centre]) continue;
                ++next;
                seeds[centre] = next;
                const int cx = static_cast<int>(centre % static_cast<std::size_t>(w)), cy = static_cast<int>(centre / static_cast<std::size_t>(w));
                const int r = gen.integer(0, 1);
                for (int y = cy - r; y <= cy + r; ++y)
                    for (int x = cx - r; x <= cx + r; ++x)
                        if (seeds.contains(x, y) && comps(x, y) == c && !seeds(x, y)) seeds(x, y) = next;
            }
        }
        // every seed pixel is 8-adjacent to its centre, so seeds are connected
        ASSERT_TRUE(labels_connected(seeds));

        FloatPlane surface = gen.chance(0.5) ? negated_distance(domain) : FloatPlane(w, h);
        if (gen.chance(0.3))
            for (auto& v : surface.data()) v = gen.real(-5, 5);

        const auto r = watershed(surface, seeds, domain);
        ASSERT_NO_FATAL_FAILURE(check_invariants(r, seeds, domain)) << "trial " << trial;
        ASSERT_EQ(count_true(r.unreached), 0u);
        ASSERT_EQ(watershed(surface, seeds, domain), r);
    }
}
