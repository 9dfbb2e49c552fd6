#pragma once

#include <stdexcept>
#include <string>

namespace inode {

// Operand shapes do not line up.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Caller passed a value outside the accepted domain.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// API used in a way the contract forbids (e.g. backward from a non-scalar).
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

// Malformed binary input.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A field does not fit the target binary layout.
struct EncodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace inode
