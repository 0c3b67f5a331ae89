#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fcnz {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Channel counts, lengths or layouts do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input has no usable energy or content (zero power, empty scope, ...).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// A configuration value is outside its valid range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Internal state contradicts itself (mask vs weights, index vs codebook).
class IntegrityError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(std::size_t epoch, const std::string& what)
        : Error("training diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace fcnz
