#pragma once

#include <stdexcept>
#include <string>

namespace voxadv {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or grid dimensions that do not fit an operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value outside the domain an operation accepts (label >= K, bad threshold, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// File could not be read, was truncated, or failed its integrity check.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace voxadv
