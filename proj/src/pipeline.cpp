#include "bh/pipeline.hpp"

#include "bh/acceptance.hpp"
#include "bh/effective_tensors.hpp"
#include "bh/error.hpp"
#include "bh/hash.hpp"
#include "bh/manifest.hpp"
#include "bh/micro_solver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace bh {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

const char* const mesh_file = "cell.bhmesh";
const char* const cell_file = "cell.bhcell";
const char* const compat_file = "compatibility.txt";
const char* const tensor_file = "tensors.bhtens";
const char* const macro_file = "macro.bhsol";
const char* const summary_file = "macro_summary.csv";
const char* const verify_file = "verify_report.txt";

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::ostream& log_of(const CommandOptions& o) { return o.log ? *o.log : std::clog; }

// Writes a command's files and records their hashes for the manifest.
class Outputs {
public:
    Outputs(const CommandOptions& opts, const RunConfig& cfg, std::string command)
        : opts_(opts), t0_(Clock::now()) {
        m_.command = std::move(command);
        m_.config_hash = cfg.hash();
        std::error_code ec;
        fs::create_directories(opts.out, ec);
        if (ec) throw Error(ErrorCode::MissingArtifact, "cannot create output directory " + opts.out.string());
    }

    void input(const ArtifactRef& a) { m_.inputs.push_back(a); }

    void write(const std::string& name, const std::string& body) {
        const fs::path p = opts_.out / name;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream os(p, std::ios::binary);
        os << body;
        if (!os) throw Error(ErrorCode::MissingArtifact, "cannot write " + p.string());
        m_.outputs.push_back({name, hash_text(body)});
    }

    void finish() {
        m_.wall_time_s = std::chrono::duration<double>(Clock::now() - t0_).count();
        write_manifest(opts_.out, m_);
    }

private:
    const CommandOptions& opts_;
    Manifest m_;
    Clock::time_point t0_;
};

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error(ErrorCode::MissingArtifact, p.string() + " not found");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::pair<CellMesh, SurfaceMesh> load_mesh(const CommandOptions& opts, Outputs& out) {
    out.input(verify_artifact(opts.out, "mesh", mesh_file));
    std::istringstream is(read_file(opts.out / mesh_file));
    return read_mesh(is);
}

std::string provenance(const RunConfig& cfg) { return std::string("config ") + cfg.hash() + " version " + tool_version; }

EffectiveTensors load_tensors(const RunConfig& cfg, const CommandOptions& opts, Outputs& out) {
    out.input(verify_artifact(opts.out, "tensors", tensor_file));
    std::istringstream is(read_file(opts.out / tensor_file));
    EffectiveTensors t = read_tensor_report(is);
    const auto cell = build_unit_cell(cfg.geometry);
    const std::string requested = hash_text(mesh_to_string(cell.first, cell.second));
    if (t.geometry_hash != requested)
        throw Error(ErrorCode::MissingArtifact, "tensors were computed on geometry " + t.geometry_hash +
                                                    " but the config requests " + requested +
                                                    "; rerun `bh mesh`, `bh cell` and `bh tensors`");
    const Coefficients& c = t.coeffs;
    if (c.lambda_int != cfg.coeffs.lambda_int || c.lambda_out != cfg.coeffs.lambda_out || c.alpha != cfg.coeffs.alpha)
        throw Error(ErrorCode::MissingArtifact, "tensors were computed for other coefficients; rerun `bh cell` and `bh tensors`");
    return t;
}

MacroMesh config_macro_mesh(const RunConfig& cfg) { return build_macro_mesh(cfg.geometry.dim(), cfg.macro_n); }

std::string vtk_text(const CellMesh& mesh, const Vector& v, const std::string& name) {
    std::ostringstream os;
    write_vtk(os, mesh, v, name);
    return os.str();
}

std::string level_name(const std::string& stem, int n) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "vtk/%s_%04d.vtk", stem.c_str(), n);
    return buf;
}

std::string eps_tag(double eps) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%ld", std::lround(1.0 / eps));
    return buf;
}

}  // namespace

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigInvalid:
        case ErrorCode::NonpositiveCoefficient:
        case ErrorCode::InvalidGeometry:
        case ErrorCode::NonIntegerTiling:
            return 2;
        case ErrorCode::MissingArtifact:
        case ErrorCode::FormatError:
            return 3;
        default:
            return 1;
    }
}

int cmd_mesh(const RunConfig& cfg, const CommandOptions& opts) {
    Outputs out(opts, cfg, "mesh");
    const auto cell = build_unit_cell(cfg.geometry);
    validate_cell_mesh(cell.first, cell.second);
    out.write(mesh_file, mesh_to_string(cell.first, cell.second));
    if (opts.vtk) out.write("vtk/cell.vtk", vtk_text(cell.first, Vector::Zero(cell.first.vertices.size()), "zero"));
    log_of(opts) << "mesh: " << cell.first.vertices.size() << " vertices, " << cell.first.elements.size()
                 << " elements, " << cell.second.size() << " interface facets, " << cell.second.n_components
                 << " components\n";
    out.finish();
    return 0;
}

int cmd_cell(const RunConfig& cfg, const CommandOptions& opts) {
    Outputs out(opts, cfg, "cell");
    const auto cell = load_mesh(opts, out);
    const CellSystem sys(cell.first, cell.second, cfg.coeffs);
    const CellFunctionSet set = compute_cell_functions(sys, cfg.kernel_grid());
    std::ostringstream arch;
    write_cell_archive(arch, set, provenance(cfg));
    out.write(cell_file, arch.str());

    // Outer flux of ∇χ₀^j through each interface component, against 1e-8·|Γ_i|.
    std::ostringstream rep;
    bool ok = true;
    rep << "j, component, outer_flux, gamma_measure, pass\n";
    for (int j = 0; j < sys.dim(); ++j) {
        const auto flux = outer_flux_integrals(sys, set.chi0.chi0[j]);
        for (std::size_t i = 0; i < flux.size(); ++i) {
            const double g = cell.second.component_measure(static_cast<int>(i));
            const bool pass = std::abs(flux[i]) <= 1e-8 * g;
            ok = ok && pass;
            rep << j + 1 << ", " << i << ", " << num(flux[i]) << ", " << num(g) << ", " << (pass ? "true" : "false")
                << '\n';
        }
    }
    out.write(compat_file, rep.str());
    log_of(opts) << "cell: compatibility " << (ok ? "satisfied" : "VIOLATED (see compatibility.txt)") << '\n';
    out.finish();
    return ok ? 0 : 1;
}

int cmd_tensors(const RunConfig& cfg, const CommandOptions& opts) {
    Outputs out(opts, cfg, "tensors");
    const auto cell = load_mesh(opts, out);
    out.input(verify_artifact(opts.out, "cell", cell_file));
    std::istringstream is(read_file(opts.out / cell_file));
    const CellFunctionSet set = read_cell_archive(is);
    const CellSystem sys(cell.first, cell.second, cfg.coeffs);
    EffectiveTensors t = compute_effective_tensors(sys, set);
    t.geometry_hash = hash_text(mesh_to_string(cell.first, cell.second));
    t.config_hash = cfg.hash();
    std::ostringstream os;
    write_tensor_report(os, t);
    out.write(tensor_file, os.str());
    log_of(opts) << "tensors: A0 gram discrepancy " << t.A0.discrepancy_gram << ", C0 discrepancy "
                 << t.C0.discrepancy << '\n';
    out.finish();
    return 0;
}

int cmd_macro(const RunConfig& cfg, const CommandOptions& opts) {
    Outputs out(opts, cfg, "macro");
    const EffectiveTensors t = load_tensors(cfg, opts, out);
    const MacroMesh mesh = config_macro_mesh(cfg);
    const int dim = cfg.geometry.dim();
    const TransientField u =
        solve_macro({&mesh, &t, preset_function(cfg.u0, dim), preset_source(cfg.f, dim), cfg.macro_grid(), cfg.regime()});
    std::ostringstream arch;
    write_solution_archive(arch, u, provenance(cfg) + " regime " + regime_name(cfg.regime()));
    out.write(macro_file, arch.str());
    std::ostringstream csv;
    const Matrix energy = cfg.regime() == Regime::KGreaterThan1 ? t.Ahom_kgt1
                          : cfg.regime() == Regime::KLessThan1 && t.has_klt1 ? t.Ahom_klt1.primary
                                                                            : t.lambda0_I_plus_A0();
    write_summary_csv(csv, mesh.mesh, u, energy);
    out.write(summary_file, csv.str());
    if (opts.vtk)
        for (std::size_t n = 0; n < u.values.size(); ++n)
            out.write(level_name("macro", static_cast<int>(n)), vtk_text(mesh.mesh, u.values[n], "u"));
    log_of(opts) << "macro: regime " << regime_name(cfg.regime()) << (u.zero_limit ? " (zero limit, nothing solved)" : "")
                 << ", " << u.values.size() << " levels\n";
    out.finish();
    return 0;
}

int cmd_micro(const RunConfig& cfg, const CommandOptions& opts) {
    Outputs out(opts, cfg, "micro");
    const auto cell = load_mesh(opts, out);
    const int dim = cfg.geometry.dim();
    for (double eps : cfg.eps_list) {
        const MicroMesh mm = tile_micro_domain(cell.first, eps, {cfg.strip_boundary_inclusions});
        const TransientField u =
            solve_micro({&mm, cfg.coeffs, cfg.k, preset_function(cfg.u0, dim), preset_source(cfg.f, dim), cfg.macro_grid()});
        const std::string tag = eps_tag(eps);
        std::ostringstream arch;
        write_solution_archive(arch, u, provenance(cfg) + " eps 1/" + tag);
        out.write("micro_eps_" + tag + ".bhsol", arch.str());
        if (opts.vtk)
            out.write("vtk/micro_eps_" + tag + ".vtk", vtk_text(mm.mesh, u.values.back(), "u"));
        log_of(opts) << "micro: eps 1/" << tag << ", " << mm.mesh.vertices.size() << " vertices\n";
    }
    out.finish();
    return 0;
}

int cmd_converge(const RunConfig& cfg, const CommandOptions& opts) {
    Outputs out(opts, cfg, "converge");
    const int dim = cfg.geometry.dim();
    const bool collapse = cfg.regime() == Regime::KLessThan1 && cfg.geometry.kind != GeometryKind::Disk2D;

    StudyConfig sc;
    sc.cell = cfg.geometry;
    sc.coeffs = cfg.coeffs;
    sc.k = cfg.k;
    sc.u0 = preset_function(cfg.u0, dim);
    sc.f = preset_source(cfg.f, dim);
    sc.grid = cfg.macro_grid();
    sc.eps_list = cfg.eps_list;
    sc.tile = {cfg.strip_boundary_inclusions};
    MacroMesh macro;
    TransientField reference;
    if (!collapse) {
        // The homogenized solution is the reference; its archive must come from `bh macro`.
        out.input(verify_artifact(opts.out, "macro", macro_file));
        std::istringstream is(read_file(opts.out / macro_file));
        reference = read_solution_archive(is);
        macro = config_macro_mesh(cfg);
        if (reference.values.empty() || reference.values[0].size() != static_cast<Eigen::Index>(macro.mesh.vertices.size()))
            throw Error(ErrorCode::MissingArtifact, "macro.bhsol does not match macro.n; rerun `bh macro`");
        sc.macro = &macro;
        sc.reference = &reference;
    }
    const StudyReport eps_report = convergence_study(sc);
    std::ostringstream a;
    write_study_csv(a, eps_report);
    out.write("study_eps.csv", a.str());
    log_of(opts) << "converge: eps sweep monotone_decrease " << (eps_report.monotone_decrease ? "true" : "false") << '\n';

    if (cfg.geometry.kind == GeometryKind::Disk2D && !cfg.eta_list.empty()) {
        ConcentrationConfig cc;
        cc.cell = cfg.geometry;
        cc.coeffs = cfg.coeffs;
        cc.eps = cfg.membrane_eps;
        cc.eta_list = cfg.eta_list;
        cc.u0 = sc.u0;
        cc.f = sc.f;
        cc.grid = sc.grid;
        cc.tile = sc.tile;
        const StudyReport eta_report = concentration_study(cc);
        std::ostringstream b;
        write_study_csv(b, eta_report);
        out.write("study_eta.csv", b.str());
        log_of(opts) << "converge: eta sweep monotone_decrease " << (eta_report.monotone_decrease ? "true" : "false")
                     << '\n';
    }
    out.finish();
    return 0;
}

void check_artifacts(const fs::path& dir) {
    if (!fs::exists(dir)) return;
    for (const char* command : {"mesh", "cell", "tensors", "macro", "micro", "converge"}) {
        if (!fs::exists(manifest_path(dir, command))) continue;
        const Manifest m = read_manifest(dir, command);
        for (const auto& a : m.outputs) verify_artifact(dir, command, a.name);
    }
}

int cmd_verify(const RunConfig& cfg, const CommandOptions& opts) {
    check_artifacts(opts.out);
    Outputs out(opts, cfg, "verify");
    const auto results = run_acceptance(&log_of(opts));
    std::ostringstream rep;
    write_acceptance_report(rep, results);
    out.write(verify_file, rep.str());
    std::cout << rep.str();
    out.finish();
    for (const auto& r : results)
        if (!r.pass) return 1;
    return 0;
}

}  // namespace bh
