#pragma once

#include <stdexcept>
#include <string>

namespace stshn {

// Exit codes used by the CLI; library code throws, the CLI maps to codes.
enum class ErrorCode : int {
    generic = 1,
    missing_file = 2,
    bad_config = 3,
    shape_mismatch = 4,
    bad_data = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(ErrorCode::missing_file, msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(ErrorCode::bad_config, msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(ErrorCode::shape_mismatch, msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(ErrorCode::bad_data, msg) {}
};

}  // namespace stshn
