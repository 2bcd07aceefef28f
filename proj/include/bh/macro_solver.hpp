#pragma once

#include "bh/effective_tensors.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace bh {

/// Uniform simplicial mesh of (0,1)^dim with n cells per side; boundary vertices flagged.
struct MacroMesh {
    CellMesh mesh;
    std::vector<char> on_boundary;
    int n = 0;
};
MacroMesh build_macro_mesh(int dim, int n);

using SpaceTimeFunction = std::function<double(const Point&, double)>;
using SpaceFunction = std::function<double(const Point&)>;

enum class Regime { K1ConnectedConnected, K1ConnectedDisconnected, KLessThan1, KGreaterThan1 };
const char* regime_name(Regime r);
Regime parse_regime(const std::string& s);

struct MacroProblem {
    const MacroMesh* mesh = nullptr;
    const EffectiveTensors* tensors = nullptr;
    SpaceFunction u0;   // ū₀, must vanish on ∂Ω; empty means zero
    SpaceTimeFunction f;  // extra volume source; empty means zero
    TimeGrid grid;
    Regime regime = Regime::K1ConnectedConnected;
};

struct TransientField {
    TimeGrid grid;
    std::vector<Vector> values;  // per vertex, one vector per level n = 0..steps
    bool zero_limit = false;     // k<1 with connected phases: the limit is zero, nothing solved
};

/// Pseudo-parabolic problem with memory (k = 1 regimes).
TransientField solve_homogenized_memory(const MacroProblem& p);
/// Elliptic problems for k<1 and k>1, one solve per time level.
TransientField solve_homogenized_elliptic(const MacroProblem& p);
/// Dispatches on the regime.
TransientField solve_macro(const MacroProblem& p);

/// ∫ ∂_hφ_p ∂_jφ_q, indexed [h][j].
std::vector<std::vector<SparseMatrix>> directional_stiffness(const CellMesh& mesh, const DofMap& dofs);
/// K_M = Σ_{jh} M_{jh} K^{(hj)}: the form of the flux h ↦ Σ_j M_{jh}∂_j u.
SparseMatrix flux_stiffness(const std::vector<std::vector<SparseMatrix>>& parts, const Matrix& M);

Vector interpolate(const CellMesh& mesh, const SpaceFunction& g);

/// L² norm of a P1 field and the space-time norm (Σ_n Δt‖uⁿ‖², n ≥ 1).
double l2_norm(const CellMesh& mesh, const Vector& u);
double l2_norm_time(const CellMesh& mesh, const TransientField& u);

// Outputs.
void write_solution_archive(std::ostream& os, const TransientField& u, const std::string& provenance);
TransientField read_solution_archive(std::istream& is);
/// CSV `t, L2_norm, energy_norm`; energy_norm = sqrt(uᵀK_M u) for the given flux matrix.
void write_summary_csv(std::ostream& os, const CellMesh& mesh, const TransientField& u, const Matrix& energy);
void write_vtk(std::ostream& os, const CellMesh& mesh, const Vector& values, const std::string& name);

}  // namespace bh
