#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gridlearn {

enum class ErrorCode {
    // grid_model
    UnknownNode,
    CycleDetected,
    DisconnectedLoadNode,
    MultipleSlacksInComponent,
    ParallelLines,
    InvalidLine,
    NotParent,
    DifferentTrees,
    MissingImpedance,
    // lcpf_engine / moments
    DimensionMismatch,
    InvalidCovariance,
    TooFewSamples,
    UnobservedNode,
    MissingPhaseData,
    // learners
    AmbiguousParent,
    IncompleteCover,
    SingularSystem,
    NegativeVarianceEstimate,
    NoRealRoot,
    BothRootsFeasible,
    NoConsistentPlacement,
    AssumptionViolated,
    // io / harness
    InvalidArgument,
    ParseError,
    InfeasibleSpec,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` says which contract broke.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace gridlearn
