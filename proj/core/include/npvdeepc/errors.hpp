#pragma once

#include <stdexcept>
#include <string>

namespace npvdeepc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or horizon mismatch between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid or degenerate data (non-finite samples, constant channels, rank loss).
class DataError : public Error {
public:
    using Error::Error;
};

/// Rejected run configuration (schema violation, unknown key, bad range).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical solver failure that cannot be reported through a status code.
class SolverError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace npvdeepc
