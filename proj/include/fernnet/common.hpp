#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fernnet {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// map failures onto exit codes in one place.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape / geometry violations (mismatched dimensions, invalid windows).
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration values or unknown enum names.
struct ConfigError : Error {
    using Error::Error;
};

// Dataset-level problems: bad labels, empty datasets.
struct DataError : Error {
    using Error::Error;
};

// File formats: bad magic, truncation, version mismatch.
struct IoError : Error {
    using Error::Error;
};

// API misuse: backward on a non-scalar, context/layer mismatch.
struct ContractError : Error {
    using Error::Error;
};

// Non-finite values detected where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

// Rejection sampling exhausted its draw budget.
struct SamplingError : Error {
    using Error::Error;
};

enum class DType : std::uint8_t { F32 = 0, F64 = 1, I64 = 2 };

inline const char* dtype_name(DType d) {
    switch (d) {
        case DType::F32: return "f32";
        case DType::F64: return "f64";
        case DType::I64: return "i64";
    }
    return "?";
}

inline std::size_t dtype_size(DType d) {
    switch (d) {
        case DType::F32: return 4;
        case DType::F64: return 8;
        case DType::I64: return 8;
    }
    return 0;
}

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ')';
    return os.str();
}

}  // namespace fernnet
