#pragma once

#include <stdexcept>
#include <string>

namespace trpa {

/// Argument outside the mathematical domain of an operation (non-finite input,
/// probability outside [0,1], non-positive temperature, empty dataset, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Two tables, distributions or policies whose shapes disagree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unknown prompt or response identifier.
class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace trpa
