#pragma once

#include <stdexcept>
#include <string>

namespace kcc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a type invariant or an operation precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure (open, read, write).
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed file: bad magic, unparsable manifest, inconsistent layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Format version newer (or older) than this build understands.
class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Stored bytes do not match what the manifest promises.
class IntegrityError : public FormatError {
public:
    using FormatError::FormatError;
};

class ChecksumError : public IntegrityError {
public:
    ChecksumError(std::string entry, const std::string& what)
        : IntegrityError(what), entry_(std::move(entry)) {}

    const std::string& entry() const noexcept { return entry_; }

private:
    std::string entry_;
};

class TruncatedError : public IntegrityError {
public:
    using IntegrityError::IntegrityError;
};

/// A gallery was built under a different pipeline configuration.
class ConfigDriftError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Segmentation was asked to run on an empty foreground.
class NoForegroundError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

}  // namespace kcc
