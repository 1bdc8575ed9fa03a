#pragma once

// Random generators and slow reference implementations shared by the tests.
// The references are deliberately naive so they share no code paths with the
// library versions they check.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "leukoseg/leukoseg.hpp"

namespace testing_support {

using namespace leukoseg;

class Gen {
  public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }
    std::uint8_t byte() { return static_cast<std::uint8_t>(integer(0, 255)); }
    std::mt19937_64& engine() { return rng_; }

    // Independent pixels, true with probability p.
    BinaryMask noise_mask(int w, int h, double p) {
        BinaryMask m(w, h);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = chance(p);
        return m;
    }

    // Union of a few random disks, closer to what the pipeline produces.
    BinaryMask blob_mask(int w, int h, int blobs, double rmin, double rmax) {
        BinaryMask m(w, h);
        for (int b = 0; b < blobs; ++b) {
            const double cx = real(0, w - 1), cy = real(0, h - 1), r = real(rmin, rmax);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m(x, y) = true;
        }
        return m;
    }

    // Half the cases are speckle, half are blobs, sizes 1..max_side.
    BinaryMask any_mask(int max_side) {
        const int w = integer(1, max_side), h = integer(1, max_side);
        if (chance(0.5)) return noise_mask(w, h, real(0.05, 0.95));
        return blob_mask(w, h, integer(1, 6), 1.0, std::max(2.0, max_side / 3.0));
    }

    RasterImage gray_image(int w, int h) {
        RasterImage img(w, h, 1);
        // mixtures of a few modes make Otsu interesting
        const int modes = integer(1, 4);
        std::vector<int> centers;
        for (int i = 0; i < modes; ++i) centers.push_back(integer(0, 255));
        const double spread = real(0, 40);
        for (auto& v : img.data()) {
            const int c = centers[static_cast<std::size_t>(integer(0, modes - 1))];
            v = static_cast<std::uint8_t>(std::clamp(c + static_cast<int>(std::lround(real(-spread, spread))), 0, 255));
        }
        return img;
    }

  private:
    std::mt19937_64 rng_;
};

inline BinaryMask mask_from_rows(const std::vector<std::string>& rows) {
    BinaryMask m(static_cast<int>(rows.front().size()), static_cast<int>(rows.size()));
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) m(x, y) = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] != '.';
    return m;
}

inline BinaryMask disk_mask(int w, int h, double cx, double cy, double r) {
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m(x, y) = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
    return m;
}

// Otsu by exhaustive search. Between-class variance times N^2 is
// (n1*S0 - n0*S1)^2 / (n0*n1); candidates are compared exactly by cross
// multiplication.
inline int otsu_oracle(const Histogram256& h) {
    int occupied = 0, only = 0;
    for (int v = 0; v < 256; ++v)
        if (h.bins[static_cast<std::size_t>(v)]) ++occupied, only = v;
    if (occupied < 2) return only;

    __extension__ typedef unsigned __int128 u128;
    __extension__ typedef __int128 i128;
    int best_t = -1;
    u128 best_num = 0, best_den = 1;
    for (int t = 0; t < 256; ++t) {
        std::uint64_t n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (int v = 0; v < 256; ++v) {
            const auto c = h.bins[static_cast<std::size_t>(v)];
            if (v <= t) n0 += c, s0 += c * static_cast<std::uint64_t>(v);
            else n1 += c, s1 += c * static_cast<std::uint64_t>(v);
        }
        if (n0 == 0 || n1 == 0) continue;
        const auto a = static_cast<i128>(n1) * s0 - static_cast<i128>(n0) * s1;
        const u128 mag = static_cast<u128>(a < 0 ? -a : a);
        const u128 num = mag * mag;
        const u128 den = static_cast<u128>(n0) * n1;
        // fits comfortably: num < 2^70 and den < 2^48 for frames up to 4096x4096
        const bool better = num * best_den > best_num * den;
        if (best_t < 0 || better) best_t = t, best_num = num, best_den = den;
    }
    return best_t;
}

// Flood fill labelling in raster order of first encounter.
inline LabelMap components_oracle(const BinaryMask& m, bool eight) {
    LabelMap out(m.width(), m.height());
    std::uint32_t next = 0;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m(x, y) || out(x, y)) continue;
            ++next;
            std::deque<std::pair<int, int>> queue{{x, y}};
            out(x, y) = next;
            while (!queue.empty()) {
                const auto [px, py] = queue.front();
                queue.pop_front();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        if (!eight && dx != 0 && dy != 0) continue;
                        const int qx = px + dx, qy = py + dy;
                        if (!m.contains(qx, qy) || !m(qx, qy) || out(qx, qy)) continue;
                        out(qx, qy) = next;
                        queue.emplace_back(qx, qy);
                    }
                }
            }
        }
    }
    return out;
}

// Nearest false pixel by scanning everything; the frame is surrounded by false.
inline FloatPlane distance_oracle(const BinaryMask& m) {
    FloatPlane out(m.width(), m.height());
    std::vector<std::pair<int, int>> background;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (!m(x, y)) background.emplace_back(x, y);
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m(x, y)) continue;
            const double border = std::min({x + 1, y + 1, m.width() - x, m.height() - y});
            double best = border * border;
            for (const auto& [bx, by] : background) {
                const double d = double(bx - x) * (bx - x) + double(by - y) * (by - y);
                best = std::min(best, d);
            }
            out(x, y) = std::sqrt(best);
        }
    }
    return out;
}

// Closing on an unbounded plane, restricted to the frame afterwards.
inline BinaryMask close_oracle(const BinaryMask& m, const StructuringElement& se) {
    const int pad = 2 * se.radius() + 1;
    const int w = m.width() + 2 * pad, h = m.height() + 2 * pad;
    std::vector<char> big(static_cast<std::size_t>(w) * h, 0), dil(big.size(), 0);
    auto at = [w](std::vector<char>& v, int x, int y) -> char& { return v[static_cast<std::size_t>(y) * w + x]; };
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) at(big, x + pad, y + pad) = m(x, y);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (const auto& o : se.offsets()) {
                const int sx = x - o.dx, sy = y - o.dy;
                if (sx >= 0 && sy >= 0 && sx < w && sy < h && at(big, sx, sy)) {
                    at(dil, x, y) = 1;
                    break;
                }
            }
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            bool all = true;
            for (const auto& o : se.offsets()) {
                if (!at(dil, x + pad + o.dx, y + pad + o.dy)) {
                    all = false;
                    break;
                }
            }
            out(x, y) = all;
        }
    }
    return out;
}

inline double iou_oracle(const BinaryMask& a, const BinaryMask& b) {
    std::size_t inter = 0, uni = 0;
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
            inter += a(x, y) && b(x, y);
            uni += a(x, y) || b(x, y);
        }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

// Best split of sorted data into three contiguous non-empty groups.
struct Partition3 {
    std::size_t first_end, second_end; // group boundaries in the sorted order
    double cost;
};

inline Partition3 best_contiguous_partition(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    auto sse = [&](std::size_t lo, std::size_t hi) {
        double mean = 0;
        for (std::size_t i = lo; i < hi; ++i) mean += values[i];
        mean /= double(hi - lo);
        double s = 0;
        for (std::size_t i = lo; i < hi; ++i) s += (values[i] - mean) * (values[i] - mean);
        return s;
    };
    Partition3 best{0, 0, std::numeric_limits<double>::infinity()};
    for (std::size_t a = 1; a + 1 < values.size(); ++a)
        for (std::size_t b = a + 1; b < values.size(); ++b) {
            const double c = sse(0, a) + sse(a, b) + sse(b, values.size());
            if (c < best.cost) best = {a, b, c};
        }
    return best;
}

// Every labelled region of `labels` is one 8-connected piece.
inline bool labels_connected(const LabelMap& labels) {
    for (std::uint32_t l = 1; l <= label_count(labels); ++l) {
        const auto region = mask_of_label(labels, l);
        if (count_true(region) == 0) continue;
        if (label_count(components_oracle(region, true)) != 1) return false;
    }
    return true;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("leukoseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

} // namespace testing_support
