#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qwzmem {

/// Coarse error classes; the CLI maps each one to an exit code.
enum class ErrorClass { config, domain, insufficient_cycles };

/**
 * @brief Base class of every error raised by the library.
 *
 * Carries a short remediation hint next to the message so the CLI can
 * tell the user which parameter to change.
 */
class Error : public std::runtime_error {
   public:
    Error(ErrorClass cls, const std::string& what, std::string hint = {})
        : std::runtime_error(what), cls_(cls), hint_(std::move(hint)) {}

    ErrorClass error_class() const noexcept { return cls_; }
    const std::string& hint() const noexcept { return hint_; }

   private:
    ErrorClass cls_;
    std::string hint_;
};

class ConfigError : public Error {
   public:
    explicit ConfigError(const std::string& what, std::string hint = {})
        : Error(ErrorClass::config, what, std::move(hint)) {}
};

class DomainError : public Error {
   public:
    explicit DomainError(const std::string& what, std::string hint = {})
        : Error(ErrorClass::domain, what, std::move(hint)) {}
};

// gauge fixing failed: R_x = R_y = 0 with the forbidden sign of R_z
class GaugeSingularity : public DomainError {
   public:
    using Node = std::pair<double, double>;

    GaugeSingularity(const std::string& what, std::vector<Node> nodes,
                     std::string hint = {})
        : DomainError(what, std::move(hint)), nodes_(std::move(nodes)) {}

    /// Offending momenta (kx, ky).
    const std::vector<Node>& nodes() const noexcept { return nodes_; }

   private:
    std::vector<Node> nodes_;
};

// adjacent overlap too small to take a link phase
class SingularField : public DomainError {
   public:
    using DomainError::DomainError;
};

class SingularPlaquette : public DomainError {
   public:
    using DomainError::DomainError;
};

class UndefinedPhaseOnLoop : public DomainError {
   public:
    using DomainError::DomainError;
};

class CriticalMass : public DomainError {
   public:
    using DomainError::DomainError;
};

class GapClosed : public DomainError {
   public:
    using DomainError::DomainError;
};

class AmbiguousBranch : public DomainError {
   public:
    using DomainError::DomainError;
};

class UnmatchedFlip : public DomainError {
   public:
    using DomainError::DomainError;
};

class InsufficientCycles : public Error {
   public:
    explicit InsufficientCycles(const std::string& what, std::string hint = {})
        : Error(ErrorClass::insufficient_cycles, what, std::move(hint)) {}
};

}  // namespace qwzmem
