#pragma once

#include "bh/fem.hpp"
#include "bh/geometry.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace bh {

struct Coefficients {
    double lambda_int = 1.0;
    double lambda_out = 3.0;
    double alpha = 1.0;

    PhaseCoefficients phases() const { return {lambda_int, lambda_out, 0.0}; }
};

/// Uniform grid t_n = n·dt, n = 0..steps.
struct TimeGrid {
    double dt = 0.01;
    int steps = 0;

    static TimeGrid from_horizon(double horizon, double dt);
    double time(int n) const { return n * dt; }
    double horizon() const { return steps * dt; }
};

/// Operators shared by all cell problems on one periodic cell.
class CellSystem {
public:
    CellSystem(const CellMesh& mesh, const SurfaceMesh& surf, const Coefficients& coeffs);
    ~CellSystem();

    const CellMesh& mesh() const { return *mesh_; }
    const SurfaceMesh& surface() const { return *surf_; }
    const Coefficients& coeffs() const { return coeffs_; }
    const DofMap& dofs() const { return dofs_; }
    int dim() const { return mesh_->dim; }

    const SparseMatrix& K() const { return K_; }  // ∫λ∇φ·∇φ
    const SparseMatrix& S() const { return S_; }  // α∫_Γ∇^Bφ·∇^Bφ
    const Vector& volume_weights() const { return vol_w_; }
    const Vector& surface_weights() const { return surf_w_; }
    const std::vector<std::vector<int>>& components() const { return comps_; }

    /// ∫λ e_j·∇φ_p.
    Vector bulk_load(int j) const;
    /// α∫_Γ (I−ν⊗ν)e_j·∇^Bφ_p.
    Vector surface_load(int j) const;

    /// Solves S x = rhs on the Γ dofs with zero mean per component. The per-component
    /// totals of rhs removed to make the system compatible are returned in `defect`.
    Vector surface_solve(const Vector& rhs, std::vector<double>* defect = nullptr) const;

    /// Mean-zero periodic extension of Γ data that is λ-harmonic off Γ, with one free
    /// constant per Γ component chosen by the flux balance of that component.
    Vector harmonic_extension(const Vector& trace, const Vector& load = Vector(),
                              std::vector<double>* constants = nullptr) const;

    GaugeGroup mean_gauge() const;

private:
    const CellMesh* mesh_;
    const SurfaceMesh* surf_;
    Coefficients coeffs_;
    DofMap dofs_;
    SparseMatrix K_, S_;
    Vector vol_w_, surf_w_;
    std::vector<std::vector<int>> comps_;
    std::vector<int> gamma_dofs_;
    std::unique_ptr<ConstrainedSolver> surface_solver_;
};

struct Chi0Result {
    std::vector<Vector> chi0;                     // per j
    std::vector<std::vector<double>> constants;   // [j][component]
};

/// A coupled bulk–surface evolution sampled on a time grid.
struct Evolution {
    TimeGrid grid;
    std::vector<Vector> X;  // n = 0..steps
    Vector Xdot0;           // time derivative at t = 0 (surface part is what matters)

    /// Backward difference used by the stepper; Xdot0 at n = 0.
    Vector rate(int n) const;
};

struct CellFunctionSet {
    TimeGrid grid;
    Chi0Result chi0;
    std::vector<Vector> v;
    std::vector<Evolution> chi1;
    std::vector<Evolution> omega;
};

Chi0Result solve_chi0(const CellSystem& sys);

/// Per-component flux functional J_p = ∫_Γ [λ∇(y_j+χ₀^j)·ν] φ_p dσ in variational form.
Vector flux_functional(const CellSystem& sys, const Vector& chi0_j, int j);

std::vector<Vector> solve_v_init(const CellSystem& sys, const Chi0Result& chi0);

Evolution evolve_surface_coupled(const CellSystem& sys, const Vector& init_surface, const TimeGrid& grid);

CellFunctionSet compute_cell_functions(const CellSystem& sys, const TimeGrid& grid);

/// W(·, t_n) = Σ_j ω^j(·, t_n) ∂_j ū₀ for a fixed macroscopic gradient sample.
Vector factor_W(const std::vector<Evolution>& omega, int n, const Point& grad_u0);

std::vector<Vector> solve_chi0_tilde(const CellSystem& sys);

/// ∫_Γ |∇^B X|² dσ.
double surface_energy(const CellSystem& sys, const Vector& X);

/// ∫_{Γ_i} (∇u)^out·ν dσ per component, in residual form −∫_{E_out}∇u·∇ψ_i with ψ_i the
/// extension of the component indicator by zero.
std::vector<double> outer_flux_integrals(const CellSystem& sys, const Vector& u);

// BHCELL 1 archive.
void write_cell_archive(std::ostream& os, const CellFunctionSet& set, const std::string& provenance);
CellFunctionSet read_cell_archive(std::istream& is);

}  // namespace bh
