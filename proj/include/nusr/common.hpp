#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nusr {

// Element type of all tensor data. The f64 build is used by the gradient-check
// test lane; the f32 build is what the trainer and CLI ship with.
#ifdef NUSR_SCALAR_F64
using scalar = double;
#else
using scalar = float;
#endif

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Error taxonomy. The CLI maps these onto exit codes: UsageError/ConfigError
// -> 1, data errors (Dimension/Domain/Format/Io) -> 2, anything else -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

// Raised by normalize() on a constant image (no dynamic range to map).
struct DegenerateRangeError : DomainError {
    using DomainError::DomainError;
};

struct UsageError : Error {
    using Error::Error;
};

struct FormatError : Error {
    std::size_t offset;
    FormatError(const std::string& msg, std::size_t at)
        : Error(msg + " (at byte offset " + std::to_string(at) + ")"), offset(at) {}
};

struct ConfigError : Error {
    int line;  // 0 when the error is not tied to a config file line
    explicit ConfigError(const std::string& msg) : Error(msg), line(0) {}
    ConfigError(const std::string& msg, int line_no)
        : Error("config line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};

struct IoError : Error {
    using Error::Error;
};

// When enabled, every forward op scans its output for non-finite values and
// throws. Tests switch this on; it defaults to on in debug builds only.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace nusr
