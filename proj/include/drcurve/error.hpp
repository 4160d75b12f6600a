#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drcurve {

enum class ErrorKind {
    InvalidArgument,
    InvalidBandwidth,
    OutOfDomain,
    DegenerateDesign,
    IllConditionedGram,
    TooFewObservations,
    InvalidTuple,
    PositivityViolation,
    NonConvergence,
    Quadrature,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InvalidBandwidth: return "invalid-bandwidth";
    case ErrorKind::OutOfDomain: return "out-of-domain";
    case ErrorKind::DegenerateDesign: return "degenerate-design";
    case ErrorKind::IllConditionedGram: return "ill-conditioned-gram";
    case ErrorKind::TooFewObservations: return "too-few-observations";
    case ErrorKind::InvalidTuple: return "invalid-tuple";
    case ErrorKind::PositivityViolation: return "positivity-violation";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::Quadrature: return "quadrature";
    }
    return "unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    [[nodiscard]] const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) throw Error(kind, message);
}

}  // namespace drcurve
