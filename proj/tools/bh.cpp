// bh: command-line driver for the homogenization pipeline.
#include "bh/config.hpp"
#include "bh/error.hpp"
#include "bh/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>

int main(int argc, char** argv) {
    CLI::App app{"bh: cell problems, effective tensors, homogenized and micro solvers"};
    app.require_subcommand(1, 1);
    std::string config_path, out_dir;
    bool vtk = false;

    using Command = int (*)(const bh::RunConfig&, const bh::CommandOptions&);
    const std::map<std::string, std::pair<Command, std::string>> commands = {
        {"mesh", {bh::cmd_mesh, "build the periodic cell mesh"}},
        {"cell", {bh::cmd_cell, "solve the cell problems and check compatibility"}},
        {"tensors", {bh::cmd_tensors, "compute and cross-check the effective tensors"}},
        {"macro", {bh::cmd_macro, "solve the homogenized problem"}},
        {"micro", {bh::cmd_micro, "solve the eps-scale problem for every eps"}},
        {"converge", {bh::cmd_converge, "eps and eta sweeps against the limits"}},
        {"verify", {bh::cmd_verify, "run the acceptance checks"}},
    };
    for (const auto& [name, entry] : commands) {
        CLI::App* sub = app.add_subcommand(name, entry.second);
        sub->add_option("--config", config_path, "INI run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
        sub->add_flag("--vtk", vtk, "also write legacy VTK files");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const bh::RunConfig cfg = bh::load_config(config_path);
        bh::CommandOptions opts;
        // Precedence: --out, then BH_OUTPUT_DIR, then the config.
        opts.out = cfg.output_dir;
        if (const char* env = std::getenv("BH_OUTPUT_DIR"); env && *env) opts.out = env;
        if (!out_dir.empty()) opts.out = out_dir;
        opts.vtk = vtk;
        const std::string name = app.get_subcommands().front()->get_name();
        return commands.at(name).first(cfg, opts);
    } catch (const bh::Error& e) {
        std::cerr << "bh: " << e.what() << '\n';
        return bh::exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "bh: " << e.what() << '\n';
        return 1;
    }
}
