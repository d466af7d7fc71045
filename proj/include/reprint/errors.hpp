#pragma once

#include <stdexcept>
#include <string>

namespace reprint {

/// Base of every error raised by the toolkit. `kind()` is a stable
/// machine-readable name used by the CLI error line.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define REPRINT_DEFINE_ERROR(Name)                                       \
    class Name : public Error {                                          \
    public:                                                              \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    };

REPRINT_DEFINE_ERROR(FormatError)
REPRINT_DEFINE_ERROR(VocabError)
REPRINT_DEFINE_ERROR(DataError)
REPRINT_DEFINE_ERROR(IoError)
REPRINT_DEFINE_ERROR(DimError)
REPRINT_DEFINE_ERROR(EmptyClassError)
REPRINT_DEFINE_ERROR(DegenerateVarianceError)
REPRINT_DEFINE_ERROR(EmptyTestError)
REPRINT_DEFINE_ERROR(PoolError)
REPRINT_DEFINE_ERROR(ConfigError)

#undef REPRINT_DEFINE_ERROR

/// Raised when the training loss stops being finite.
class DivergenceError : public Error {
public:
    DivergenceError(int epoch, const std::string& message)
        : Error("DivergenceError", message), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

} // namespace reprint
