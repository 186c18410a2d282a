#pragma once

#include <stdexcept>
#include <string>

namespace tsdn {

// Base class for every error the library throws.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated shape/channel precondition; the message carries the offending shapes.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Filesystem-level failure: missing file, unreadable/unwritable path.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Malformed or unsupported file content.
struct FormatError : Error {
    enum class Kind {
        UnsupportedFormat,
        CorruptHeader,
        BadMagic,
        VersionMismatch,
        Truncated,
    };

    FormatError(Kind kind, const std::string& msg) : Error(msg), kind(kind) {}

    Kind kind;
};

// Numeric breakdown (non-finite loss and similar).
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace tsdn
