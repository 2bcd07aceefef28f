#pragma once

#include "bh/cell_problems.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace bh {

using Matrix = Eigen::MatrixXd;

// Row index is the corrector index j, column index the flux component h.

/// A quantity computed along two independent routes.
struct DualForm {
    Matrix primary;    // volume / direct form
    Matrix secondary;  // surface / Gram form
    double discrepancy = 0.0;  // max-entry difference
    double scale = 0.0;        // reference magnitude used for the relative check

    double relative() const { return scale > 0.0 ? discrepancy / scale : discrepancy; }
};

double compute_lambda0(const CellMesh& mesh, const Coefficients& coeffs);

/// Direct form α∫_Γ(I−ν⊗ν+∇^Bχ₀) against the Gram form.
DualForm compute_C0(const CellSystem& sys, const Chi0Result& chi0);

struct A0Result {
    Matrix volume;   // ∫λ∇χ₀ + α∫_Γ∇^Bχ₁(0)
    Matrix surface;  // ∫_Γ α∇^Bχ₁(0) − [λ]χ₀⊗ν
    Matrix gram;     // ∫λ∇(χ₀^j+y_j)·∇(χ₀^h+y_h), compares with λ₀I+A⁰
    double lambda0 = 0.0;
    double discrepancy_surface = 0.0;
    double discrepancy_gram = 0.0;
    double scale = 0.0;
};
A0Result compute_A0(const CellSystem& sys, const Chi0Result& chi0, const std::vector<Evolution>& chi1);

/// Kernel samples at every grid time. Also used for Φ with the ω evolutions.
std::vector<DualForm> compute_kernel(const CellSystem& sys, const std::vector<Evolution>& fields);

/// −s(v_h, χ₁^j(t_n)); equal to B⁰(t_n) by the cell equations.
Matrix kernel_from_surface_pairing(const CellSystem& sys, const std::vector<Vector>& v,
                                   const std::vector<Evolution>& chi1, int n);

/// Theorem-formula form against the Gram form. Disk2D only.
DualForm compute_Ahom_klt1(const CellSystem& sys, const Chi0Result& chi0);

Matrix compute_Ahom_kgt1(const CellSystem& sys, const std::vector<Vector>& chi0_tilde);

/// Eigenvalues of the symmetric part, ascending.
Eigen::VectorXd sym_eigenvalues(const Matrix& M);
double asymmetry(const Matrix& M);  // ‖M − Mᵀ‖_max / ‖M‖_max

struct TensorTolerances {
    double A0 = 1e-6;
    double C0 = 1e-6;
    double kernel = 1e-5;
    double Ahom = 1e-6;
};

struct EffectiveTensors {
    int dim = 2;
    GeometryKind kind = GeometryKind::Disk2D;
    Coefficients coeffs;
    double lambda0 = 0.0;
    double gamma_measure = 0.0;
    A0Result A0;
    DualForm C0;
    TimeGrid grid;
    std::vector<DualForm> B0;
    std::vector<DualForm> Phi;
    bool has_klt1 = false;
    DualForm Ahom_klt1;
    Matrix Ahom_kgt1;
    std::string geometry_hash;
    std::string config_hash;

    Matrix lambda0_I_plus_A0() const;
    /// B⁰ and Φ at time t, linear interpolation between samples, zero beyond the horizon
    /// is not allowed (throws ConfigInvalid).
    Matrix B0_at(double t) const;
    Matrix Phi_at(double t) const;
};

/// Computes every tensor and throws CrossCheckFailed when a dual route disagrees.
EffectiveTensors compute_effective_tensors(const CellSystem& sys, const CellFunctionSet& cells,
                                           const TensorTolerances& tol = {});

// BHTENS 1 report. Reading restores every field that the writer emits.
void write_tensor_report(std::ostream& os, const EffectiveTensors& t);
EffectiveTensors read_tensor_report(std::istream& is);

}  // namespace bh
