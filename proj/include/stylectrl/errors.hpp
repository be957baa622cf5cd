#pragma once

#include <stdexcept>
#include <string>

namespace stylectrl {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between tensor operands.
struct DimensionError : Error {
    using Error::Error;
};

// Out-of-range token id or position.
struct IndexError : Error {
    using Error::Error;
};

// A caller broke a documented precondition.
struct ContractError : Error {
    using Error::Error;
};

// No hypothesis could reach EOS under the active constraints.
struct DecodeError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct ValidationError : Error {
    using Error::Error;
};

}  // namespace stylectrl
