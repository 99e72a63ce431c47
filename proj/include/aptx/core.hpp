// Shared error taxonomy and small utilities.
#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace aptx {

// Total spatial downsampling of the generator; image sizes fed to it must
// be divisible by this.
inline constexpr int kGeneratorDownsample = 4;
// Stride product of the style encoder (4 stride-2 stages).
inline constexpr int kStyleEncoderStride = 16;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct LookupError : Error { using Error::Error; };
struct SamplingError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct ContaminationError : Error { using Error::Error; };
struct ArgumentError : Error { using Error::Error; };

template <class... Args>
std::string cat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

}  // namespace aptx
