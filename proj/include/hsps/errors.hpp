#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hsps {

/// Argument outside the domain of a model formula (negative time, probability > 1, ...).
class DomainError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid configuration (simulation, detector, CLI).
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A root solve or target search has no solution in the admissible range.
class NoSolutionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Parameter estimation could not produce a consistent result.
class EstimationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent time-tag stream. Carries the byte offset of the
/// offending record (or line number for CSV input).
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

  private:
    std::uint64_t offset_;
};

namespace detail {

inline void require(bool ok, const char* message) {
    if (!ok) {
        throw DomainError(message);
    }
}

}  // namespace detail

}  // namespace hsps
