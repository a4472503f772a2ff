#pragma once

#include <stdexcept>
#include <string>

namespace gfts {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (bad number, missing column). Carries the 1-based row.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t row)
        : Error("row " + std::to_string(row) + ": " + what), row_(row) {}

    [[nodiscard]] std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Well-formed input that violates a structural rule (duplicate keys,
/// inconsistent grids, incoherent group definitions).
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: degenerate model, singular system, non-PD weight matrix.
class ComputationError : public Error {
public:
    using Error::Error;
};

}  // namespace gfts
