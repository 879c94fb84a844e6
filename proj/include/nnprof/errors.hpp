#pragma once

#include <stdexcept>
#include <string>

namespace nnprof {

// Shape/extent mismatches between tensors.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad argument values (out-of-range labels, negative std, empty grids, ...).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data; carries a byte offset where parsing failed.
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, std::uint64_t byte_offset)
        : std::runtime_error(msg + " (at byte " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::uint64_t offset;
};

// Inconsistent model or plan configuration.
struct ConfigurationError : std::runtime_error {
    explicit ConfigurationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nnprof
