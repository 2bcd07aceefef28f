#pragma once

#include "bh/macro_solver.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace bh {

/// ε-scale problem with the dynamic condition on Γ^ε weighted by ε^k α.
struct MicroRun {
    const MicroMesh* mesh = nullptr;
    Coefficients coeffs;
    double k = 1.0;
    SpaceFunction u0;     // ū₀; the run uses ε^{(1−k)/2}ū₀
    SpaceTimeFunction f;  // empty means zero
    TimeGrid grid;
};

struct MicroDiagnostics {
    std::vector<double> bulk;     // a_λ(uⁿ, uⁿ)
    std::vector<double> surface;  // ε^k α ∫_Γ|∇^B uⁿ|²
    std::vector<double> membrane; // (1/η)∫_membrane|∇uⁿ|², membrane runs only
    double energy_bulk = 0.0;     // Σ_n Δt ∫|∇uⁿ|²
    double energy_surface = 0.0;  // ε^k max_n ∫_Γ|∇^B uⁿ|²

    std::vector<double> lyapunov() const;  // bulk + surface (+ membrane block)
};

TransientField solve_micro(const MicroRun& run, MicroDiagnostics* diag = nullptr);

/// The same stepping on a periodic cell (ε = 1, mean-zero gauge), started from the
/// λ-harmonic extension of a Γ trace. Reproduces evolve_surface_coupled.
std::vector<Vector> solve_micro_periodic(const CellMesh& mesh, const SurfaceMesh& surf, const Coefficients& coeffs,
                                         const Vector& init_surface, const TimeGrid& grid);

/// Thick membrane of relative width η: coefficient α/η in the membrane, λ = 0 there.
struct MembraneRun {
    const MicroMesh* mesh = nullptr;  // tiled membrane cell
    Coefficients coeffs;
    double eta = 0.1;
    SpaceFunction u0;
    SpaceTimeFunction f;
    TimeGrid grid;
};

TransientField solve_membrane(const MembraneRun& run, MicroDiagnostics* diag = nullptr);

/// Per-cell volume averages at every level; index = linear cell index of the tiling.
std::vector<Vector> local_average(const MicroMesh& mesh, const TransientField& u);

/// ‖M_ε(u_ε) − u‖_{L²(Ω_T)} on a macro mesh aligned with the cells (n multiple of 1/ε).
double average_error(const MicroMesh& micro, const std::vector<Vector>& averages, const MacroMesh& macro,
                     const TransientField& u);
/// ‖M_ε v‖_{L²(Ω)} for a single level, used for the contraction property.
double average_norm(const MicroMesh& micro, const Vector& averages);

/// Finds the element containing a point. Bins elements by bounding box.
class PointLocator {
public:
    explicit PointLocator(const CellMesh& mesh);
    /// Element index and barycentric weights; throws MeshFailure outside the mesh.
    int locate(const Point& x, std::array<double, 4>& bary) const;
    double evaluate(const Vector& u, const Point& x) const;

private:
    const CellMesh* mesh_;
    int nb_ = 1;
    std::vector<std::vector<int>> bins_;
    bool barycentric(int e, const Point& x, std::array<double, 4>& b) const;
    int bin_of(double c) const;
};

/// ‖u_A − u_B‖_{L²(Ω_T)} for fields on two different meshes of the same domain.
double l2_time_difference(const CellMesh& a, const TransientField& ua, const CellMesh& b, const TransientField& ub);

struct StudyRow {
    double param = 0.0;  // ε or η
    double error = 0.0;
    double energy_bulk = 0.0;
    double energy_surface = 0.0;
    double runtime_s = 0.0;
};

struct StudyReport {
    std::string param_name = "eps";
    std::vector<StudyRow> rows;
    bool monotone_decrease = false;
};

/// ε-sweep of solve_micro. With a reference macro field the error is the local-average
/// distance; without one it is ‖u_ε‖_{L²(Ω_T)}.
struct StudyConfig {
    GeometrySpec cell;
    Coefficients coeffs;
    double k = 1.0;
    SpaceFunction u0;
    SpaceTimeFunction f;
    TimeGrid grid;
    std::vector<double> eps_list;
    TileOptions tile;
    const MacroMesh* macro = nullptr;
    const TransientField* reference = nullptr;
};
StudyReport convergence_study(const StudyConfig& cfg);

/// η-sweep of solve_membrane at fixed ε against the concentrated k = 1 micro solution.
struct ConcentrationConfig {
    GeometrySpec cell;
    Coefficients coeffs;
    double eps = 0.5;
    std::vector<double> eta_list;
    SpaceFunction u0;
    SpaceTimeFunction f;
    TimeGrid grid;
    TileOptions tile;
};
StudyReport concentration_study(const ConcentrationConfig& cfg);

bool strictly_decreasing(const std::vector<double>& v);

/// `param, error_L2, energy_bulk, energy_surface, runtime_s` and the verdict line.
void write_study_csv(std::ostream& os, const StudyReport& r);

}  // namespace bh
