#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace leukoseg {

enum class ErrorCode {
    file_not_found,
    unsupported_format,
    corrupt_stream,
    io_write_failure,
    wrong_channel_count,
    out_of_range,
    invalid_argument,
    dimension_mismatch,
    empty_domain,
    too_few_distinct_values,
    k_not_3,
    empty_seeds,
    seed_outside_domain,
    degenerate_image,
    empty_semantic_mask,
    no_seeds_found,
    empty_nucleus_cluster,
    cells_do_not_fit,
    invalid_spec,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::file_not_found: return "file-not-found";
    case ErrorCode::unsupported_format: return "unsupported-format";
    case ErrorCode::corrupt_stream: return "corrupt-stream";
    case ErrorCode::io_write_failure: return "io-write-failure";
    case ErrorCode::wrong_channel_count: return "wrong-channel-count";
    case ErrorCode::out_of_range: return "out-of-range";
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::empty_domain: return "empty-domain";
    case ErrorCode::too_few_distinct_values: return "too-few-distinct-values";
    case ErrorCode::k_not_3: return "k-not-3";
    case ErrorCode::empty_seeds: return "empty-seeds";
    case ErrorCode::seed_outside_domain: return "seed-outside-domain";
    case ErrorCode::degenerate_image: return "degenerate-image";
    case ErrorCode::empty_semantic_mask: return "empty-semantic-mask";
    case ErrorCode::no_seeds_found: return "no-seeds-found";
    case ErrorCode::empty_nucleus_cluster: return "empty-nucleus-cluster";
    case ErrorCode::cells_do_not_fit: return "cells-do-not-fit";
    case ErrorCode::invalid_spec: return "invalid-spec";
    }
    return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

} // namespace leukoseg
