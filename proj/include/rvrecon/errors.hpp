#pragma once

#include <stdexcept>
#include <string>

namespace rvrecon {

// Base for every domain/data failure raised by the library. The CLI maps
// anything derived from Error to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or non-finite input data.
class DataError : public Error {
public:
    using Error::Error;
};

// Wrong column layout, header, or row count.
class SchemaError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// RV window with fewer than two samples after clamping.
class DegenerateWindowError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class BandError : public Error {
public:
    using Error::Error;
};

class StitchError : public Error {
public:
    using Error::Error;
};

class MetricError : public Error {
public:
    using Error::Error;
};

class StatTestError : public Error {
public:
    using Error::Error;
};

class SplitError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

// Checkpoint channel mode does not match the supplied windows.
class ModeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace rvrecon
