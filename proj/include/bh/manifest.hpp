#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace bh {

inline constexpr const char* tool_version = "0.1.0";

struct ArtifactRef {
    std::string name;  // file name relative to the output directory
    std::string hash;  // FNV-1a of the file bytes
};

/// BHRUN 1 manifest written next to every command's outputs.
struct Manifest {
    std::string command;
    std::string version = tool_version;
    std::string config_hash;
    std::vector<ArtifactRef> inputs;
    std::vector<ArtifactRef> outputs;
    double wall_time_s = 0.0;
};

std::filesystem::path manifest_path(const std::filesystem::path& dir, const std::string& command);
void write_manifest(const std::filesystem::path& dir, const Manifest& m);
/// Throws MissingArtifact if the manifest is absent or unreadable.
Manifest read_manifest(const std::filesystem::path& dir, const std::string& command);

std::string file_hash(const std::filesystem::path& p);

/// Checks that `name` was produced by `command` in `dir` and is byte-identical to what the
/// manifest recorded. Returns the reference for the downstream manifest.
ArtifactRef verify_artifact(const std::filesystem::path& dir, const std::string& command, const std::string& name);

}  // namespace bh
