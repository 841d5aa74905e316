#pragma once

#include <stdexcept>
#include <string>

namespace posekit {

/// Shape or dimension mismatch. Messages name the offending axis.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Argument outside its documented domain.
class ValueError : public std::runtime_error {
public:
    explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad or inconsistent configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unreadable or malformed data. CLI exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class BadMagicError : public DataError {
public:
    explicit BadMagicError(const std::string& msg) : DataError(msg) {}
};

class TruncatedFileError : public DataError {
public:
    explicit TruncatedFileError(const std::string& msg) : DataError(msg) {}
};

class DimOverflowError : public DataError {
public:
    explicit DimOverflowError(const std::string& msg) : DataError(msg) {}
};

/// Non-finite values or other numeric breakdown. CLI exit code 4.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace posekit
