#pragma once

#include "bh/config.hpp"
#include "bh/error.hpp"

#include <filesystem>
#include <iosfwd>

namespace bh {

struct CommandOptions {
    std::filesystem::path out;  // resolved output directory
    bool vtk = false;
    std::ostream* log = nullptr;
};

/// Each command writes its outputs and a BHRUN 1 manifest into opts.out and returns the
/// process exit code (0 pass, 1 check failure). Config and artifact problems throw.
int cmd_mesh(const RunConfig& cfg, const CommandOptions& opts);
int cmd_cell(const RunConfig& cfg, const CommandOptions& opts);
int cmd_tensors(const RunConfig& cfg, const CommandOptions& opts);
int cmd_macro(const RunConfig& cfg, const CommandOptions& opts);
int cmd_micro(const RunConfig& cfg, const CommandOptions& opts);
int cmd_converge(const RunConfig& cfg, const CommandOptions& opts);
int cmd_verify(const RunConfig& cfg, const CommandOptions& opts);

/// Re-hashes every artifact listed by every manifest in dir. Throws MissingArtifact on a mismatch.
void check_artifacts(const std::filesystem::path& dir);

/// 0 pass, 1 check failure, 2 config error, 3 artifact error.
int exit_code_for(ErrorCode code);

}  // namespace bh
