#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace plateplast {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidMaterialError : public Error {
public:
    using Error::Error;
};

/// The 3x3 relaxation system is singular (Q not positive definite).
class DegenerateTensorError : public Error {
public:
    using Error::Error;
};

/// Matrix logarithm requested outside the unit ball around the identity.
class OutOfNeighborhoodError : public Error {
public:
    using Error::Error;
};

class DeterminantError : public Error {
public:
    using Error::Error;
};

/// A displacement state does not satisfy the clamped boundary conditions.
class AdmissibilityError : public Error {
public:
    using Error::Error;
};

/// Plastic strain would leave the hardening set K.
class KExitError : public Error {
public:
    using Error::Error;
};

/// Scenario does not satisfy the hypotheses of a reduction check.
class HypothesisError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (const auto& s : v) {
            if (!out.empty()) out += "; ";
            out += s;
        }
        return out;
    }
    std::vector<std::string> violations_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace plateplast
