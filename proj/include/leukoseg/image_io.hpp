#pragma once

#include <png.h>

#include <array>
#include <cctype>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <system_error>
#include <vector>

#include "leukoseg/error.hpp"
#include "leukoseg/raster.hpp"

namespace leukoseg {

namespace io_detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw Error(ErrorCode::file_not_found, path.string());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_not_found, path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a sibling temp file and renames it over the destination.
inline void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io_write_failure, "cannot open " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ignore;
            std::filesystem::remove(tmp, ignore);
            throw Error(ErrorCode::io_write_failure, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::io_write_failure, "cannot rename onto " + path.string());
    }
}

inline bool has_png_signature(const std::vector<std::uint8_t>& bytes) {
    return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<std::uint8_t> samples; // 16-bit samples stored big-endian
};

struct PngReadCursor {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t offset;
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
    auto* cursor = static_cast<PngReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + count > cursor->size) {
        png_error(png, "unexpected end of stream");
    }
    std::memcpy(out, cursor->data + cursor->offset, count);
    cursor->offset += count;
}

inline void png_silent_warning(png_structp, png_const_charp) {}

// Only trivially destructible locals live between setjmp and any longjmp.
inline bool decode_png_rows(png_structp png, png_infop info, DecodedPng& out, std::vector<png_bytep>& rows) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) png_set_interlace_handling(png);
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const auto stride = png_get_rowbytes(png, info);
    out.samples.resize(stride * static_cast<std::size_t>(out.height));
    rows.resize(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = out.samples.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    return true;
}

inline DecodedPng decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_silent_warning);
    if (!png) throw Error(ErrorCode::corrupt_stream, "libpng init failed for " + name);
    png_infop info = png_create_info_struct(png);
    PngReadCursor cursor{bytes.data(), bytes.size(), 0};
    png_set_read_fn(png, &cursor, png_read_from_memory);

    DecodedPng out;
    std::vector<png_bytep> rows;
    const bool ok = info && decode_png_rows(png, info, out, rows);
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (!ok) throw Error(ErrorCode::corrupt_stream, name);
    return out;
}

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t count) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + count);
}

inline void png_flush_noop(png_structp) {}

inline bool encode_png_rows(png_structp png, png_infop info, int width, int height, int color_type, int bit_depth,
                            std::vector<png_bytep>& rows) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    return true;
}

/// `samples` are row-major; 16-bit samples big-endian.
inline std::vector<std::uint8_t> encode_png(const std::uint8_t* samples, int width, int height, int channels,
                                            int bit_depth) {
    static constexpr int color_types[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA, PNG_COLOR_TYPE_RGB,
                                          PNG_COLOR_TYPE_RGB_ALPHA};
    if (channels < 1 || channels > 4) throw Error(ErrorCode::wrong_channel_count, "png needs 1 to 4 channels");
    const int color_type = color_types[channels - 1];
    const std::size_t stride = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(samples + stride * y);

    std::vector<std::uint8_t> bytes;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_silent_warning);
    if (!png) throw Error(ErrorCode::io_write_failure, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    png_set_write_fn(png, &bytes, png_write_to_vector, png_flush_noop);
    const bool ok = info && encode_png_rows(png, info, width, height, color_type, bit_depth, rows);
    png_destroy_write_struct(&png, info ? &info : nullptr);
    if (!ok) throw Error(ErrorCode::io_write_failure, "png encoding failed");
    return bytes;
}

inline bool is_pnm_magic(const std::vector<std::uint8_t>& bytes) {
    return bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6');
}

inline RasterImage decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    const int channels = bytes[1] == '6' ? 3 : 1;
    std::size_t pos = 2;
    auto next_int = [&]() -> long {
        for (;;) {
            while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
            throw Error(ErrorCode::corrupt_stream, name + ": malformed PNM header");
        }
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            if (v > (1L << 24)) throw Error(ErrorCode::corrupt_stream, name + ": PNM header value too large");
        }
        return v;
    };
    const long width = next_int();
    const long height = next_int();
    const long maxval = next_int();
    if (width < 1 || height < 1) throw Error(ErrorCode::corrupt_stream, name + ": PNM dimensions");
    if (maxval != 255) throw Error(ErrorCode::unsupported_format, name + ": only 8-bit PNM is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
        throw Error(ErrorCode::corrupt_stream, name + ": malformed PNM header");
    }
    ++pos;
    const std::size_t need = static_cast<std::size_t>(width) * height * channels;
    if (bytes.size() - pos < need) throw Error(ErrorCode::corrupt_stream, name + ": truncated PNM raster");
    std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return RasterImage(static_cast<int>(width), static_cast<int>(height), channels, std::move(data));
}

inline std::vector<std::uint8_t> encode_pnm(const RasterImage& img) {
    const std::string header = (img.channels() == 3 ? "P6\n" : "P5\n") + std::to_string(img.width()) + " " +
                               std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    bytes.insert(bytes.end(), img.data().begin(), img.data().end());
    return bytes;
}

inline std::string lower_extension(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext;
}

} // namespace io_detail

/// Loads an 8-bit PNG, P5 or P6 image. Alpha is dropped; palette and
/// low-bit-depth gray are expanded.
inline RasterImage load_image(const std::filesystem::path& path) {
    const auto bytes = io_detail::read_file(path);
    const auto name = path.string();
    if (io_detail::is_pnm_magic(bytes)) return io_detail::decode_pnm(bytes, name);
    if (!io_detail::has_png_signature(bytes)) throw Error(ErrorCode::unsupported_format, name);

    auto png = io_detail::decode_png(bytes, name);
    if (png.bit_depth != 8) {
        throw Error(ErrorCode::unsupported_format, name + ": expected 8-bit samples (use load_label_map for 16-bit)");
    }
    const int out_channels = png.channels >= 3 ? 3 : 1;
    if (png.channels == out_channels) {
        return RasterImage(png.width, png.height, out_channels, std::move(png.samples));
    }
    RasterImage img(png.width, png.height, out_channels);
    auto dst = img.data();
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < out_channels; ++c) {
            dst[i * out_channels + c] = png.samples[i * png.channels + c];
        }
    }
    return img;
}

/// Format follows the extension: .png, .ppm (3 channels), .pgm (1 channel) or .pnm.
inline void save_image(const RasterImage& img, const std::filesystem::path& path) {
    const auto ext = io_detail::lower_extension(path);
    std::vector<std::uint8_t> bytes;
    if (ext == ".png") {
        bytes = io_detail::encode_png(img.data().data(), img.width(), img.height(), img.channels(), 8);
    } else if (ext == ".pnm" || (ext == ".ppm" && img.channels() == 3) || (ext == ".pgm" && img.channels() == 1)) {
        bytes = io_detail::encode_pnm(img);
    } else {
        throw Error(ErrorCode::unsupported_format, "cannot write " + path.string());
    }
    io_detail::write_file_atomic(path, bytes);
}

/// Label maps persist as 16-bit grayscale PNG.
inline void save_label_map(const LabelMap& labels, const std::filesystem::path& path) {
    std::vector<std::uint8_t> samples(labels.size() * 2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > 0xFFFF) throw Error(ErrorCode::out_of_range, "label exceeds 16 bits");
        samples[2 * i] = static_cast<std::uint8_t>(labels[i] >> 8);
        samples[2 * i + 1] = static_cast<std::uint8_t>(labels[i] & 0xFF);
    }
    io_detail::write_file_atomic(path, io_detail::encode_png(samples.data(), labels.width(), labels.height(), 1, 16));
}

/// Reads a 16-bit (or 8-bit) single-channel PNG into a LabelMap.
inline LabelMap load_label_map(const std::filesystem::path& path) {
    const auto bytes = io_detail::read_file(path);
    if (!io_detail::has_png_signature(bytes)) throw Error(ErrorCode::unsupported_format, path.string());
    const auto png = io_detail::decode_png(bytes, path.string());
    if (png.channels != 1) throw Error(ErrorCode::wrong_channel_count, path.string() + ": label map must be gray");
    LabelMap labels(png.width, png.height);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = png.bit_depth == 16
                        ? static_cast<std::uint32_t>(png.samples[2 * i] << 8 | png.samples[2 * i + 1])
                        : png.samples[i];
    }
    return labels;
}

inline RasterImage mask_to_image(const BinaryMask& mask) {
    RasterImage img(mask.width(), mask.height(), 1);
    auto dst = img.data();
    for (std::size_t i = 0; i < mask.size(); ++i) dst[i] = mask[i] ? 255 : 0;
    return img;
}

/// Nonzero gray pixels become true.
inline BinaryMask image_to_mask(const RasterImage& img) {
    if (img.channels() != 1) throw Error(ErrorCode::wrong_channel_count, "mask image must be gray");
    BinaryMask mask(img.width(), img.height());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = img.data()[i] != 0;
    return mask;
}

/// 255 distinct non-black colors; the seed only permutes which label gets which.
inline std::array<std::array<std::uint8_t, 3>, 256> label_palette(std::uint64_t seed) {
    std::array<std::array<std::uint8_t, 3>, 256> base{};
    for (unsigned i = 1; i < 256; ++i) {
        // spread the index bits across channels so neighbouring labels differ strongly
        const unsigned r = (i & 1u) | ((i >> 2) & 2u) | ((i >> 4) & 4u);
        const unsigned g = ((i >> 1) & 1u) | ((i >> 3) & 2u) | ((i >> 5) & 4u);
        const unsigned b = ((i >> 2) & 1u) | ((i >> 4) & 2u);
        base[i] = {static_cast<std::uint8_t>(40 + 30 * r), static_cast<std::uint8_t>(40 + 30 * g),
                   static_cast<std::uint8_t>(40 + 70 * b)};
    }
    std::mt19937_64 rng(seed);
    for (unsigned i = 255; i > 1; --i) {
        const unsigned j = 1 + static_cast<unsigned>(rng() % i);
        std::swap(base[i], base[j]);
    }
    return base;
}

inline RasterImage label_to_image(const LabelMap& labels, std::uint64_t palette_seed) {
    const auto palette = label_palette(palette_seed);
    RasterImage img(labels.width(), labels.height(), 3);
    auto dst = img.data();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto v = labels[i];
        if (v == 0) continue;
        const auto& color = palette[(v - 1) % 255 + 1];
        dst[3 * i] = color[0];
        dst[3 * i + 1] = color[1];
        dst[3 * i + 2] = color[2];
    }
    return img;
}

} // namespace leukoseg
