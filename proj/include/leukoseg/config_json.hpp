#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "leukoseg/error.hpp"
#include "leukoseg/pipeline.hpp"

namespace leukoseg {

using Json = nlohmann::json;

namespace json_detail {

template <typename Enum, std::size_t N>
Enum enum_from(const Json& value, const std::string& field, const std::pair<std::string_view, Enum> (&table)[N]) {
    if (!value.is_string()) throw Error(ErrorCode::invalid_spec, field + ": expected a string");
    const auto text = value.get<std::string>();
    for (const auto& [name, e] : table)
        if (name == text) return e;
    throw Error(ErrorCode::invalid_spec, field + ": unknown value '" + text + "'");
}

template <typename Enum, std::size_t N>
std::string enum_name(Enum e, const std::pair<std::string_view, Enum> (&table)[N]) {
    for (const auto& [name, v] : table)
        if (v == e) return std::string(name);
    return "unknown";
}

inline constexpr std::pair<std::string_view, ElementShape> shapes[] = {{"ellipse", ElementShape::ellipse},
                                                                        {"square", ElementShape::square}};
inline constexpr std::pair<std::string_view, Polarity> polarities[] = {{"above", Polarity::above},
                                                                        {"below", Polarity::below}};
inline constexpr std::pair<std::string_view, KMeansInit> inits[] = {{"quantile", KMeansInit::quantile},
                                                                     {"random", KMeansInit::random}};
inline constexpr std::pair<std::string_view, ClusterChannel> channels[] = {
    {"l", ClusterChannel::lightness}, {"a", ClusterChannel::a}, {"b", ClusterChannel::b}};
inline constexpr std::pair<std::string_view, ClusterDomain> domains[] = {{"masked", ClusterDomain::masked},
                                                                          {"full-frame", ClusterDomain::full_frame}};
inline constexpr std::pair<std::string_view, Emit> emits[] = {
    {"labelmap", Emit::labelmap}, {"overlay", Emit::overlay}, {"contours", Emit::contours},
    {"crops", Emit::crops},       {"masks", Emit::masks},     {"metrics-json", Emit::metrics_json}};

template <typename T>
T number(const Json& value, const std::string& field) {
    if (!value.is_number()) throw Error(ErrorCode::invalid_spec, field + ": expected a number");
    if constexpr (std::is_integral_v<T>) {
        if (!value.is_number_integer()) throw Error(ErrorCode::invalid_spec, field + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (value.is_number_unsigned()) return value.get<T>();
            if (value.get<long long>() < 0) throw Error(ErrorCode::invalid_spec, field + ": must be non-negative");
        }
    }
    return value.get<T>();
}

inline void require_object(const Json& value, const std::string& field) {
    if (!value.is_object()) throw Error(ErrorCode::invalid_spec, field + ": expected an object");
}

} // namespace json_detail

inline EmitSet parse_emit_list(const std::vector<std::string>& names) {
    EmitSet set;
    for (const auto& name : names) set.add(json_detail::enum_from(Json(name), "emit", json_detail::emits));
    return set;
}

/// Comma-separated emit list, e.g. "labelmap,overlay". Empty string means none.
inline EmitSet parse_emit_list(std::string_view csv) {
    std::vector<std::string> names;
    std::string current;
    for (char ch : csv) {
        if (ch == ',') {
            if (!current.empty()) names.push_back(current);
            current.clear();
        } else if (ch != ' ') {
            current.push_back(ch);
        }
    }
    if (!current.empty()) names.push_back(current);
    return parse_emit_list(names);
}

inline Json to_json(const PipelineConfig& cfg) {
    using namespace json_detail;
    Json emit = Json::array();
    for (const auto& [name, e] : emits)
        if (cfg.emit.has(e)) emit.push_back(name);
    return {
        {"se_radius", cfg.se_radius},
        {"se_shape", enum_name(cfg.se_shape, shapes)},
        {"stretch_percentiles", {cfg.stretch_low, cfg.stretch_high}},
        {"y_polarity", enum_name(cfg.y_polarity, polarities)},
        {"m_polarity", enum_name(cfg.m_polarity, polarities)},
        {"kmeans",
         {{"k", cfg.kmeans.k},
          {"max_iterations", cfg.kmeans.max_iterations},
          {"tolerance", cfg.kmeans.tolerance},
          {"seed", cfg.kmeans.seed},
          {"init", enum_name(cfg.kmeans.init, inits)}}},
        {"cluster_channel", enum_name(cfg.cluster_channel, channels)},
        {"cluster_domain", enum_name(cfg.cluster_domain, domains)},
        {"seeds", {{"dt_fraction", cfg.seeds.dt_fraction}, {"min_seed_area", cfg.seeds.min_seed_area}}},
        {"clean_nucleus", cfg.clean_nucleus},
        {"min_cell_area", cfg.min_cell_area},
        {"emit", emit},
        {"record_timings", cfg.record_timings},
    };
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline PipelineConfig pipeline_config_from_json(const Json& j, PipelineConfig base = {}) {
    using namespace json_detail;
    require_object(j, "config");
    for (const auto& [key, value] : j.items()) {
        if (key == "se_radius") {
            base.se_radius = number<int>(value, key);
        } else if (key == "se_shape") {
            base.se_shape = enum_from(value, key, shapes);
        } else if (key == "stretch_percentiles") {
            if (!value.is_array() || value.size() != 2) {
                throw Error(ErrorCode::invalid_spec, key + ": expected [low, high]");
            }
            base.stretch_low = number<double>(value[0], key);
            base.stretch_high = number<double>(value[1], key);
        } else if (key == "y_polarity") {
            base.y_polarity = enum_from(value, key, polarities);
        } else if (key == "m_polarity") {
            base.m_polarity = enum_from(value, key, polarities);
        } else if (key == "kmeans") {
            require_object(value, key);
            for (const auto& [sub, v] : value.items()) {
                const auto field = key + "." + sub;
                if (sub == "k") base.kmeans.k = number<int>(v, field);
                else if (sub == "max_iterations") base.kmeans.max_iterations = number<int>(v, field);
                else if (sub == "tolerance") base.kmeans.tolerance = number<double>(v, field);
                else if (sub == "seed") base.kmeans.seed = number<std::uint64_t>(v, field);
                else if (sub == "init") base.kmeans.init = enum_from(v, field, inits);
                else throw Error(ErrorCode::invalid_spec, field + ": unknown field");
            }
        } else if (key == "cluster_channel") {
            base.cluster_channel = enum_from(value, key, channels);
        } else if (key == "cluster_domain") {
            base.cluster_domain = enum_from(value, key, domains);
        } else if (key == "seeds") {
            require_object(value, key);
            for (const auto& [sub, v] : value.items()) {
                const auto field = key + "." + sub;
                if (sub == "dt_fraction") base.seeds.dt_fraction = number<double>(v, field);
                else if (sub == "min_seed_area") base.seeds.min_seed_area = number<int>(v, field);
                else throw Error(ErrorCode::invalid_spec, field + ": unknown field");
            }
        } else if (key == "min_cell_area") {
            base.min_cell_area = number<int>(value, key);
        } else if (key == "emit") {
            if (!value.is_array()) throw Error(ErrorCode::invalid_spec, "emit: expected an array of names");
            EmitSet set;
            for (const auto& item : value) set.add(enum_from(item, key, emits));
            base.emit = set;
        } else if (key == "clean_nucleus") {
            if (!value.is_boolean()) throw Error(ErrorCode::invalid_spec, key + ": expected a boolean");
            base.clean_nucleus = value.get<bool>();
        } else if (key == "record_timings") {
            if (!value.is_boolean()) throw Error(ErrorCode::invalid_spec, key + ": expected a boolean");
            base.record_timings = value.get<bool>();
        } else {
            throw Error(ErrorCode::invalid_spec, key + ": unknown field");
        }
    }
    try {
        base.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::invalid_spec, e.what());
    }
    return base;
}

/// Parses JSON text; syntax errors name the byte offset.
inline Json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::invalid_spec,
                    origin + ": malformed JSON at byte " + std::to_string(e.byte) + " (" + e.what() + ")");
    }
}

inline Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::file_not_found, path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_json_text(buffer.str(), path.string());
}

inline void write_json_file(const Json& j, const std::filesystem::path& path) {
    const auto text = j.dump(2) + "\n";
    io_detail::write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

} // namespace leukoseg
