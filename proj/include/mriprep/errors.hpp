#pragma once

#include <stdexcept>
#include <string>

namespace mriprep {

// Base of every error thrown by the library. The CLI maps the subclasses
// onto exit codes (see ExitCode in tools/).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (bad shape, bad parameter).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// A value fell outside the representable range (e.g. intensity > 1 on save).
class RangeError : public Error {
public:
    using Error::Error;
};

// Input is mathematically outside the operation's domain (e.g. log of <= 0).
class DomainError : public Error {
public:
    using Error::Error;
};

// NaN / Inf encountered where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class LoadError : public Error {
public:
    enum class Kind { malformed_header, truncated_payload, unsupported_magic };

    LoadError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class EmptyRegionError : public Error {
public:
    using Error::Error;
};

class DegenerateHistogramError : public Error {
public:
    using Error::Error;
};

class CorruptCheckpointError : public Error {
public:
    using Error::Error;
};

// Dataset directory does not follow the expected class layout.
class LayoutError : public Error {
public:
    using Error::Error;
};

}  // namespace mriprep
