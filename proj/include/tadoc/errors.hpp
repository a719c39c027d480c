#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tadoc {

// File could not be decoded; byte_offset points at the first offending byte.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " (at byte " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_ = 0;
};

class UnsupportedFormat : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Fixed-point inversion did not converge on more than the allowed share of cells.
class InversionFailed : public std::runtime_error {
public:
    explicit InversionFailed(double failure_ratio)
        : std::runtime_error("map inversion failed on " +
                             std::to_string(failure_ratio * 100.0) + "% of cells"),
          failure_ratio_(failure_ratio) {}

    double failure_ratio() const noexcept { return failure_ratio_; }

private:
    double failure_ratio_ = 0.0;
};

// Warp generation exhausted its retry budget without an invertible map.
class GenerationFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tadoc
