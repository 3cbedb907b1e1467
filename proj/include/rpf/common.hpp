#pragma once

#include <stdexcept>
#include <string>

namespace rpf {

// Invalid arguments or broken preconditions. The CLI reports these as usage
// errors (exit status 2).
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed input files: bad magic, unsupported version, truncated payload,
// unparseable cells.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A stored index does not match the supplied data matrix, or the index file
// itself fails its checksum.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failures, annotated with the offending path.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace rpf
