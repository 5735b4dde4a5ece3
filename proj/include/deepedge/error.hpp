#pragma once

#include <stdexcept>
#include <string>

namespace deepedge {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto its exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes or lengths that do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A value outside its documented domain (e.g. a score outside [0, 1]).
class DomainError : public Error {
public:
    using Error::Error;
};

// Invalid tunable, unknown config key, bad command-line value.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Model/data problems: fingerprint mismatch, sample shortfall, bad corpus.
class DataError : public Error {
public:
    using Error::Error;
};

// A required input file or prediction is missing.
class MissingArtifactError : public Error {
public:
    std::string path;
    MissingArtifactError(const std::string& what, std::string p) : Error(what), path(std::move(p)) {}
};

}  // namespace deepedge
