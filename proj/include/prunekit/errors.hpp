#pragma once

#include <stdexcept>
#include <string>

namespace prunekit {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/matrix dimension mismatches.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Bad argument values (out-of-range counts, invalid ratios, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Graph structure violations (unmatched residual markers, BN without conv, ...).
class StructureError : public Error {
public:
    using Error::Error;
};

// Named node not present in a graph.
class LookupError : public Error {
public:
    using Error::Error;
};

// Non-finite values or failed factorizations.
class NumericError : public Error {
public:
    using Error::Error;
};

// A speed-up budget that no channel assignment can satisfy.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

// Malformed model/config/spec files.
class ParseError : public Error {
public:
    using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace prunekit
