#pragma once

#include <stdexcept>
#include <string>

namespace prn {

// Error classes double as CLI exit codes: 2 config, 3 I/O, 4 validation.
enum class ErrorClass : int { Config = 2, Io = 3, Validation = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& what)
        : std::runtime_error(what), cls_(cls) {}

    ErrorClass error_class() const noexcept { return cls_; }
    int exit_code() const noexcept { return static_cast<int>(cls_); }

private:
    ErrorClass cls_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorClass::Config, w) {}
};

struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorClass::Io, w) {}
};

// Malformed file contents (bad magic, shape mismatch, non-finite values).
struct FormatError : Error {
    explicit FormatError(const std::string& w) : Error(ErrorClass::Validation, w) {}
};

// JSON document does not match the expected schema.
struct SchemaError : Error {
    explicit SchemaError(const std::string& w) : Error(ErrorClass::Validation, w) {}
};

struct InvalidSegment : Error {
    explicit InvalidSegment(const std::string& w) : Error(ErrorClass::Validation, w) {}
};

struct ValueError : Error {
    explicit ValueError(const std::string& w) : Error(ErrorClass::Validation, w) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& w) : Error(ErrorClass::Validation, w) {}
};

struct StepTooLarge : Error {
    explicit StepTooLarge(const std::string& w) : Error(ErrorClass::Validation, w) {}
};

struct DivergenceError : Error {
    explicit DivergenceError(const std::string& w) : Error(ErrorClass::Validation, w) {}
};

struct EmptyClassification : Error {
    explicit EmptyClassification(const std::string& w) : Error(ErrorClass::Validation, w) {}
};

struct LengthMismatch : Error {
    explicit LengthMismatch(const std::string& w) : Error(ErrorClass::Validation, w) {}
};

struct NoGroundTruth : Error {
    explicit NoGroundTruth(const std::string& w) : Error(ErrorClass::Validation, w) {}
};

} // namespace prn
