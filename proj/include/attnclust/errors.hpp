#pragma once

#include <stdexcept>
#include <string>

namespace attnclust {

// Base for all recoverable errors raised by the toolkit. Precondition
// violations on direct API calls use std::invalid_argument instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad or missing configuration (exit code 2 from the CLI).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or invalid input data (exit code 3 from the CLI).
class DataError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss (exit code 4 from the CLI).
class DivergedError : public Error {
public:
    DivergedError(int epoch, const std::string& what)
        : Error(what), epoch_(epoch) {}

    int epoch() const { return epoch_; }

private:
    int epoch_;
};

}  // namespace attnclust
