// Runs `bh verify` twice and prints one pass/fail line per acceptance criterion.
// Criteria 1-13 come from the first run's report; 14 compares the two runs byte for byte.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Every file except manifests, which carry wall times.
std::map<std::string, std::string> bodies(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() != ".bhrun")
            out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

int run_verify(const std::string& bh, const std::string& config, const fs::path& out) {
    fs::remove_all(out);
    const std::string cmd = "\"" + bh + "\" verify --config \"" + config + "\" --out \"" + out.string() + "\" > \"" +
                            (out.string() + ".stdout") + "\" 2> \"" + (out.string() + ".stderr") + "\"";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 4) {
        std::cerr << "usage: acceptance <bh> <config> <scratch dir>\n";
        return 2;
    }
    const std::string bh = argv[1], config = argv[2];
    const fs::path scratch = argv[3];
    fs::create_directories(scratch);
    const fs::path a = scratch / "run_a", b = scratch / "run_b";
    const int rc_a = run_verify(bh, config, a);
    const int rc_b = run_verify(bh, config, b);
    if (rc_a != 0 && rc_a != 1) {
        std::cerr << "bh verify exited with " << rc_a << ":\n" << slurp(a.string() + ".stderr");
        return 2;
    }

    bool all = true;
    const std::string report = slurp(a / "verify_report.txt");
    const std::regex line(R"(^criterion (\d+): (PASS|FAIL)  (.*)$)");
    std::istringstream is(report);
    std::string l;
    int seen = 0;
    while (std::getline(is, l)) {
        std::smatch m;
        if (std::regex_match(l, m, line)) {
            ++seen;
            const bool pass = m[2] == "PASS";
            all = all && pass;
            std::cout << "criterion " << m[1] << " " << (pass ? "PASS" : "FAIL") << "  " << m[3] << '\n';
        } else if (l.rfind("    FAIL", 0) == 0) {
            std::cout << "    " << l.substr(4) << '\n';
        }
    }
    if (seen != 13) {
        std::cout << "report lists " << seen << " criteria, expected 13\n";
        all = false;
    }

    const auto ba = bodies(a), bb = bodies(b);
    const bool same = rc_a == rc_b && !ba.empty() && ba == bb;
    all = all && same;
    std::cout << "criterion 14 " << (same ? "PASS" : "FAIL") << "  repeated bh verify runs are byte-identical ("
              << ba.size() << " files compared, manifests excluded)\n";
    return all ? 0 : 1;
}
