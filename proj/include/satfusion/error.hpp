#pragma once

#include <stdexcept>
#include <string>

namespace satfusion {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor dimensions are inconsistent with an operation's contract.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// A numeric or configuration parameter is out of range.
class ParamError : public Error {
public:
    explicit ParamError(const std::string& msg) : Error(msg) {}
};

/// An API was called in a way that can never be valid (e.g. backward on a
/// non-scalar).
class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

/// A serialized artifact is malformed (bad magic, truncated payload, ...).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

/// On-disk data is structurally valid but inconsistent (missing frames,
/// manifest mismatch, ...).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

/// Input is too degenerate for the requested computation.
class DegenerateError : public Error {
public:
    explicit DegenerateError(const std::string& msg) : Error(msg) {}
};

} // namespace satfusion
