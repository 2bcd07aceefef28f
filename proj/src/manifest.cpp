#include "bh/manifest.hpp"

#include "bh/error.hpp"
#include "bh/hash.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace bh {

namespace fs = std::filesystem;

fs::path manifest_path(const fs::path& dir, const std::string& command) { return dir / (command + ".bhrun"); }

void write_manifest(const fs::path& dir, const Manifest& m) {
    std::ofstream os(manifest_path(dir, m.command));
    if (!os) throw Error(ErrorCode::MissingArtifact, "cannot write manifest in " + dir.string());
    char wall[40];
    std::snprintf(wall, sizeof wall, "%.3f", m.wall_time_s);
    os << "BHRUN 1\n";
    os << "command " << m.command << '\n';
    os << "version " << m.version << '\n';
    os << "config_hash " << m.config_hash << '\n';
    for (const auto& a : m.inputs) os << "input " << a.name << ' ' << a.hash << '\n';
    for (const auto& a : m.outputs) os << "output " << a.name << ' ' << a.hash << '\n';
    os << "wall_time_s " << wall << '\n';
    os << "end\n";
}

Manifest read_manifest(const fs::path& dir, const std::string& command) {
    const fs::path p = manifest_path(dir, command);
    std::ifstream is(p);
    if (!is)
        throw Error(ErrorCode::MissingArtifact, p.string() + " not found; run `bh " + command + "` first");
    std::string line;
    if (!std::getline(is, line) || line != "BHRUN 1")
        throw Error(ErrorCode::MissingArtifact, p.string() + " is not a BHRUN 1 manifest");
    Manifest m;
    bool ended = false;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "command") ls >> m.command;
        else if (tok == "version") ls >> m.version;
        else if (tok == "config_hash") ls >> m.config_hash;
        else if (tok == "input" || tok == "output") {
            ArtifactRef a;
            ls >> a.name >> a.hash;
            (tok == "input" ? m.inputs : m.outputs).push_back(a);
        } else if (tok == "wall_time_s") ls >> m.wall_time_s;
        else if (tok == "end") {
            ended = true;
            break;
        } else
            throw Error(ErrorCode::MissingArtifact, p.string() + ": unexpected line '" + line + "'");
    }
    if (!ended || m.command != command) throw Error(ErrorCode::MissingArtifact, p.string() + " is truncated or foreign");
    return m;
}

std::string file_hash(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error(ErrorCode::MissingArtifact, p.string() + " not found");
    const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return hash_text(bytes);
}

ArtifactRef verify_artifact(const fs::path& dir, const std::string& command, const std::string& name) {
    const Manifest m = read_manifest(dir, command);
    for (const auto& a : m.outputs) {
        if (a.name != name) continue;
        const std::string h = file_hash(dir / name);
        if (h != a.hash)
            throw Error(ErrorCode::MissingArtifact, (dir / name).string() + " does not match its manifest (hash " + h +
                                                        ", recorded " + a.hash + "); rerun `bh " + command + "`");
        return a;
    }
    throw Error(ErrorCode::MissingArtifact, "manifest of `bh " + command + "` does not list " + name);
}

}  // namespace bh
