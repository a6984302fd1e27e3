#pragma once

#include <stdexcept>
#include <string>

namespace shapenet {

/// Base of all library errors. The kind maps onto CLI exit codes.
class Error : public std::runtime_error {
public:
    enum class Kind { Usage = 1, Data = 2, Numeric = 3 };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Bad arguments, shape mismatches, violated preconditions.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(Kind::Usage, what) {}
};

/// Malformed or inconsistent input data (files, grids, observations).
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(Kind::Data, what) {}
};

/// Non-finite gradients or losses.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(Kind::Numeric, what) {}
};

} // namespace shapenet
