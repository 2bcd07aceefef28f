#include "bh/error.hpp"

namespace bh {

const char* error_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidGeometry: return "InvalidGeometry";
        case ErrorCode::MeshFailure: return "MeshFailure";
        case ErrorCode::NonIntegerTiling: return "NonIntegerTiling";
        case ErrorCode::NonpositiveCoefficient: return "NonpositiveCoefficient";
        case ErrorCode::DegenerateFacet: return "DegenerateFacet";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::MissingAdjacency: return "MissingAdjacency";
        case ErrorCode::ComponentSingular: return "ComponentSingular";
        case ErrorCode::CompatibilityViolated: return "CompatibilityViolated";
        case ErrorCode::SolverFailure: return "SolverFailure";
        case ErrorCode::CrossCheckFailed: return "CrossCheckFailed";
        case ErrorCode::WrongGeometryClass: return "WrongGeometryClass";
        case ErrorCode::SingularStep: return "SingularStep";
        case ErrorCode::MissingArtifact: return "MissingArtifact";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::FormatError: return "FormatError";
    }
    return "Unknown";
}

}  // namespace bh
