#pragma once

#include "bh/geometry.hpp"

#include <Eigen/Core>
#include <Eigen/Sparse>

#include <array>
#include <memory>
#include <vector>

namespace bh {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

struct PhaseCoefficients {
    double lambda_int = 1.0;
    double lambda_out = 1.0;
    double lambda_membrane = 0.0;

    double at(Phase p) const {
        switch (p) {
            case Phase::Int: return lambda_int;
            case Phase::Out: return lambda_out;
            case Phase::Membrane: return lambda_membrane;
        }
        return lambda_out;
    }
};

/// Vertex to unknown numbering. Periodic pairs collapse onto one dof.
struct DofMap {
    std::vector<int> vertex_dof;
    std::vector<int> dof_vertex;   // a representative vertex per dof
    std::vector<char> dirichlet;   // per dof
    int n_dofs = 0;

    static DofMap periodic(const CellMesh& mesh);
    static DofMap identity(const CellMesh& mesh);
    static DofMap with_dirichlet(const CellMesh& mesh, const std::vector<char>& vertex_mask);

    int size() const { return n_dofs; }
};

enum class OperatorKind { BulkStiffness, SurfaceStiffness, BulkMass, SurfaceSource };

struct SparseOperator {
    SparseMatrix matrix;
    OperatorKind kind = OperatorKind::BulkStiffness;
};

/// P1 gradients (rows of a (dim+1) x 3 array) and the volume of element e.
struct ElementGeometry {
    std::array<Point, 4> grad;
    double volume = 0.0;
};
ElementGeometry element_geometry(const CellMesh& mesh, int e);

/// Tangential gradients of the facet hat functions.
struct FacetGeometry {
    std::array<Point, 3> grad;
    double measure = 0.0;
};
/// Intrinsic formula from the facet metric tensor.
FacetGeometry facet_geometry(const CellMesh& mesh, const SurfaceMesh& surf, int f);
/// Projection formula (I − ν⊗ν)∇ of an extruded simplex; kept as an independent check.
FacetGeometry facet_geometry_projected(const CellMesh& mesh, const SurfaceMesh& surf, int f);

Point element_gradient(const CellMesh& mesh, const DofMap& dofs, int e, const Vector& u);
Point facet_gradient(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs, int f, const Vector& u);

// Public assemblers validate coefficients; the weighted variants accept zeros and are
// used for phase-restricted forms.
SparseOperator assemble_bulk_stiffness(const CellMesh& mesh, const DofMap& dofs, const PhaseCoefficients& c);
SparseMatrix assemble_weighted_stiffness(const CellMesh& mesh, const DofMap& dofs, const PhaseCoefficients& c);
/// ∫ ∇φ_p · M ∇φ_q for a constant matrix M (dim x dim block of M is used).
SparseMatrix assemble_matrix_stiffness(const CellMesh& mesh, const DofMap& dofs, const Eigen::Matrix3d& M);
SparseOperator assemble_bulk_mass(const CellMesh& mesh, const DofMap& dofs);
SparseOperator assemble_surface_stiffness(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs,
                                          double alpha = 1.0);
SparseOperator assemble_surface_mass(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs);

/// l_p = ∫ λ e·∇φ_p, the load of the affine field y ↦ e·y.
Vector assemble_gradient_load(const CellMesh& mesh, const DofMap& dofs, const PhaseCoefficients& c, const Point& e);
/// l_p = α ∫_Γ (I−ν⊗ν)e · ∇^Bφ_p dσ.
Vector assemble_surface_gradient_load(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs,
                                      double alpha, const Point& e);

/// ∫ φ_p over Y, i.e. exact weights for the mean of a P1 field.
Vector volume_weights(const CellMesh& mesh, const DofMap& dofs);
/// ∫_Γ φ_p dσ.
Vector surface_weights(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs);

/// Dofs carried by Γ, grouped by connected component (sorted, unique).
std::vector<std::vector<int>> surface_component_dofs(const SurfaceMesh& surf, const DofMap& dofs);

/// Facet-wise λ_out ∇u|_out·ν − λ_int ∇u|_int·ν.
Vector surface_flux_jump(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs,
                         const PhaseCoefficients& c, const Vector& u);

/// A set of dofs on which the operator's kernel contains the indicator. The solve fixes
/// Σ w_p x_p = target on each group and removes the incompatible part of the right-hand side.
struct GaugeGroup {
    std::vector<int> dofs;
    std::vector<double> weights;
    double target = 0.0;
};

enum class SolverKind { Direct, ConjugateGradient };

/// Factor once, solve many. Dirichlet dofs are eliminated; gauge groups are pinned at one
/// dof and shifted afterwards, which is equivalent to one Lagrange row per group.
class ConstrainedSolver {
public:
    ConstrainedSolver(const SparseMatrix& K, std::vector<char> dirichlet, std::vector<GaugeGroup> gauges,
                      SolverKind kind = SolverKind::Direct, double cg_tol = 1e-10);
    ~ConstrainedSolver();
    ConstrainedSolver(ConstrainedSolver&&) noexcept;
    ConstrainedSolver& operator=(ConstrainedSolver&&) noexcept;

    /// dirichlet_values may be empty (all zero); otherwise it is a full-length vector whose
    /// Dirichlet entries are imposed.
    Vector solve(const Vector& b, const Vector& dirichlet_values = Vector()) const;

    /// Multipliers removed from the right-hand side by the last solve, one per gauge group.
    const std::vector<double>& last_multipliers() const { return multipliers_; }
    int size() const { return n_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int n_ = 0;
    mutable std::vector<double> multipliers_;
};

/// Convenience wrapper for a single solve.
Vector solve_constrained(const SparseMatrix& K, const Vector& b, const std::vector<char>& dirichlet,
                         const std::vector<GaugeGroup>& gauges, SolverKind kind = SolverKind::Direct);

/// Energy-minimising extension. Dofs in each constrained group take prescribed values
/// g plus one free constant per group (zero when the group has a Dirichlet dof); all
/// other non-Dirichlet dofs are free. Minimises ½uᵀKu − lᵀu.
/// `mean_weights` (optional) fixes Σ w u = mean_target when the problem has no Dirichlet dofs.
struct ExtensionProblem {
    const SparseMatrix* K = nullptr;
    std::vector<std::vector<int>> groups;
    Vector prescribed;  // full length; read on group and Dirichlet dofs
    Vector load;        // full length, may be empty
    std::vector<char> dirichlet;
    Vector mean_weights;  // empty: no gauge
    double mean_target = 0.0;
};
struct ExtensionResult {
    Vector u;
    std::vector<double> constants;  // per group
};
ExtensionResult constrained_extension(const ExtensionProblem& p);

/// Rows/cols restricted to the listed dofs (compact numbering in list order).
SparseMatrix restrict_matrix(const SparseMatrix& K, const std::vector<int>& dofs);

}  // namespace bh
