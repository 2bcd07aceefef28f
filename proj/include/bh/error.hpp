#pragma once

#include <stdexcept>
#include <string>

namespace bh {

enum class ErrorCode {
    InvalidGeometry,
    MeshFailure,
    NonIntegerTiling,
    NonpositiveCoefficient,
    DegenerateFacet,
    SingularSystem,
    MissingAdjacency,
    ComponentSingular,
    CompatibilityViolated,
    SolverFailure,
    CrossCheckFailed,
    WrongGeometryClass,
    SingularStep,
    MissingArtifact,
    ConfigInvalid,
    FormatError,
};

const char* error_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

}  // namespace bh
