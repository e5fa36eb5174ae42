#include "gridlearn/error.hpp"

namespace gridlearn {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::DisconnectedLoadNode: return "DisconnectedLoadNode";
        case ErrorCode::MultipleSlacksInComponent: return "MultipleSlacksInComponent";
        case ErrorCode::ParallelLines: return "ParallelLines";
        case ErrorCode::InvalidLine: return "InvalidLine";
        case ErrorCode::NotParent: return "NotParent";
        case ErrorCode::DifferentTrees: return "DifferentTrees";
        case ErrorCode::MissingImpedance: return "MissingImpedance";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::InvalidCovariance: return "InvalidCovariance";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::UnobservedNode: return "UnobservedNode";
        case ErrorCode::MissingPhaseData: return "MissingPhaseData";
        case ErrorCode::AmbiguousParent: return "AmbiguousParent";
        case ErrorCode::IncompleteCover: return "IncompleteCover";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::NegativeVarianceEstimate: return "NegativeVarianceEstimate";
        case ErrorCode::NoRealRoot: return "NoRealRoot";
        case ErrorCode::BothRootsFeasible: return "BothRootsFeasible";
        case ErrorCode::NoConsistentPlacement: return "NoConsistentPlacement";
        case ErrorCode::AssumptionViolated: return "AssumptionViolated";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    }
    return "Unknown";
}

}  // namespace gridlearn
