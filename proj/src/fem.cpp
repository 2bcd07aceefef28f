#include "bh/fem.hpp"

#include "bh/error.hpp"
#include "bh/union_find.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace bh {

DofMap DofMap::periodic(const CellMesh& mesh) {
    const int nv = static_cast<int>(mesh.vertices.size());
    UnionFind uf(nv);
    for (const auto& pp : mesh.periodic) uf.unite(pp.p, pp.q);
    DofMap d;
    d.vertex_dof.assign(nv, -1);
    std::vector<int> root_dof(nv, -1);
    for (int v = 0; v < nv; ++v) {
        const int r = uf.find(v);
        if (root_dof[r] < 0) {
            root_dof[r] = d.n_dofs++;
            d.dof_vertex.push_back(v);
        }
        d.vertex_dof[v] = root_dof[r];
    }
    d.dirichlet.assign(d.n_dofs, 0);
    return d;
}

DofMap DofMap::identity(const CellMesh& mesh) {
    DofMap d;
    d.n_dofs = static_cast<int>(mesh.vertices.size());
    d.vertex_dof.resize(d.n_dofs);
    d.dof_vertex.resize(d.n_dofs);
    for (int v = 0; v < d.n_dofs; ++v) d.vertex_dof[v] = d.dof_vertex[v] = v;
    d.dirichlet.assign(d.n_dofs, 0);
    return d;
}

DofMap DofMap::with_dirichlet(const CellMesh& mesh, const std::vector<char>& vertex_mask) {
    DofMap d = identity(mesh);
    for (int v = 0; v < d.n_dofs; ++v) d.dirichlet[v] = vertex_mask[v];
    return d;
}

ElementGeometry element_geometry(const CellMesh& mesh, int e) {
    const auto& el = mesh.elements[e];
    const int d = mesh.dim;
    ElementGeometry g;
    const Point& x0 = mesh.vertices[el.v[0]];
    if (d == 2) {
        Eigen::Matrix2d J;
        J.col(0) = (mesh.vertices[el.v[1]] - x0).head<2>();
        J.col(1) = (mesh.vertices[el.v[2]] - x0).head<2>();
        const Eigen::Matrix2d Jinv = J.inverse();
        g.volume = std::abs(J.determinant()) / 2.0;
        for (int k = 0; k < 2; ++k) g.grad[k + 1] = Point(Jinv(k, 0), Jinv(k, 1), 0.0);
        g.grad[0] = -(g.grad[1] + g.grad[2]);
    } else {
        Eigen::Matrix3d J;
        for (int k = 0; k < 3; ++k) J.col(k) = mesh.vertices[el.v[k + 1]] - x0;
        const Eigen::Matrix3d Jinv = J.inverse();
        g.volume = std::abs(J.determinant()) / 6.0;
        for (int k = 0; k < 3; ++k) g.grad[k + 1] = Jinv.row(k).transpose();
        g.grad[0] = -(g.grad[1] + g.grad[2] + g.grad[3]);
    }
    return g;
}

FacetGeometry facet_geometry(const CellMesh& mesh, const SurfaceMesh& surf, int f) {
    const auto& v = surf.facets[f];
    const int k = mesh.dim - 1;  // facet dimension
    FacetGeometry g;
    const Point& y0 = mesh.vertices[v[0]];
    Eigen::Matrix<double, 3, Eigen::Dynamic> T(3, k);
    for (int a = 0; a < k; ++a) T.col(a) = mesh.vertices[v[a + 1]] - y0;
    const Eigen::MatrixXd G = T.transpose() * T;
    const double detG = G.determinant();
    g.measure = std::sqrt(std::max(detG, 0.0)) / (k == 1 ? 1.0 : 2.0);
    if (!(g.measure >= 1e-14)) throw Error(ErrorCode::DegenerateFacet, "interface facet measure below 1e-14");
    const Eigen::MatrixXd D = T * G.inverse();  // columns: gradients of hats 1..k
    Point sum = Point::Zero();
    for (int a = 0; a < k; ++a) {
        g.grad[a + 1] = D.col(a);
        sum += g.grad[a + 1];
    }
    g.grad[0] = -sum;
    return g;
}

FacetGeometry facet_geometry_projected(const CellMesh& mesh, const SurfaceMesh& surf, int f) {
    const auto& v = surf.facets[f];
    const int d = mesh.dim;
    const Point& nu = surf.normals[f];
    const Point& y0 = mesh.vertices[v[0]];
    // Extrude along ν: the hats of the facet vertices restrict to the facet hats.
    Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
    for (int a = 0; a < d - 1; ++a) J.col(a) = mesh.vertices[v[a + 1]] - y0;
    J.col(d - 1) = nu;
    if (d == 2) J.col(2) = Point(0, 0, 1);
    const Eigen::Matrix3d Jinv = J.inverse();
    const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - nu * nu.transpose();
    FacetGeometry g;
    Point sum = Point::Zero();
    for (int a = 0; a < d - 1; ++a) {
        Point full = Jinv.row(a).transpose();
        if (d == 2) full.z() = 0.0;
        g.grad[a + 1] = P * full;
        sum += g.grad[a + 1];
    }
    g.grad[0] = -sum;
    g.measure = surf.measure[f];
    return g;
}

Point element_gradient(const CellMesh& mesh, const DofMap& dofs, int e, const Vector& u) {
    const ElementGeometry g = element_geometry(mesh, e);
    Point r = Point::Zero();
    for (int a = 0; a <= mesh.dim; ++a) r += u[dofs.vertex_dof[mesh.elements[e].v[a]]] * g.grad[a];
    return r;
}

Point facet_gradient(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs, int f, const Vector& u) {
    const FacetGeometry g = facet_geometry(mesh, surf, f);
    Point r = Point::Zero();
    for (int a = 0; a < mesh.dim; ++a) r += u[dofs.vertex_dof[surf.facets[f][a]]] * g.grad[a];
    return r;
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

SparseMatrix from_triplets(int n, const Triplets& t) {
    SparseMatrix K(n, n);
    K.setFromTriplets(t.begin(), t.end());
    K.makeCompressed();
    return K;
}

void check_coefficients(const CellMesh& mesh, const PhaseCoefficients& c) {
    bool has_membrane = false;
    for (const auto& el : mesh.elements) has_membrane = has_membrane || el.phase == Phase::Membrane;
    if (!(c.lambda_int > 0.0) || !(c.lambda_out > 0.0))
        throw Error(ErrorCode::NonpositiveCoefficient, "lambda_int and lambda_out must be positive");
    if (has_membrane && !(c.lambda_membrane >= 0.0))
        throw Error(ErrorCode::NonpositiveCoefficient, "membrane coefficient must be non-negative");
}

template <class ElementMatrix>
SparseMatrix assemble_elements(const CellMesh& mesh, const DofMap& dofs, ElementMatrix&& fill) {
    Triplets t;
    const int nv = mesh.dim + 1;
    t.reserve(mesh.elements.size() * nv * nv);
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const ElementGeometry g = element_geometry(mesh, static_cast<int>(e));
        double w[4][4];
        if (!fill(static_cast<int>(e), g, w)) continue;
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                t.emplace_back(dofs.vertex_dof[mesh.elements[e].v[a]], dofs.vertex_dof[mesh.elements[e].v[b]],
                               w[a][b]);
    }
    return from_triplets(dofs.n_dofs, t);
}

}  // namespace

SparseMatrix assemble_weighted_stiffness(const CellMesh& mesh, const DofMap& dofs, const PhaseCoefficients& c) {
    const int nv = mesh.dim + 1;
    return assemble_elements(mesh, dofs, [&](int e, const ElementGeometry& g, double (*w)[4]) {
        const double lam = c.at(mesh.elements[e].phase);
        if (lam == 0.0) return false;
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b) w[a][b] = lam * g.volume * g.grad[a].dot(g.grad[b]);
        return true;
    });
}

SparseOperator assemble_bulk_stiffness(const CellMesh& mesh, const DofMap& dofs, const PhaseCoefficients& c) {
    check_coefficients(mesh, c);
    return {assemble_weighted_stiffness(mesh, dofs, c), OperatorKind::BulkStiffness};
}

SparseMatrix assemble_matrix_stiffness(const CellMesh& mesh, const DofMap& dofs, const Eigen::Matrix3d& M) {
    const int nv = mesh.dim + 1;
    Eigen::Matrix3d Md = Eigen::Matrix3d::Zero();
    Md.topLeftCorner(mesh.dim, mesh.dim) = M.topLeftCorner(mesh.dim, mesh.dim);
    return assemble_elements(mesh, dofs, [&](int, const ElementGeometry& g, double (*w)[4]) {
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b) w[a][b] = g.volume * g.grad[a].dot(Md * g.grad[b]);
        return true;
    });
}

SparseOperator assemble_bulk_mass(const CellMesh& mesh, const DofMap& dofs) {
    const int nv = mesh.dim + 1;
    const double denom = (nv) * (nv + 1);
    SparseMatrix M = assemble_elements(mesh, dofs, [&](int, const ElementGeometry& g, double (*w)[4]) {
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b) w[a][b] = g.volume * (a == b ? 2.0 : 1.0) / denom;
        return true;
    });
    return {std::move(M), OperatorKind::BulkMass};
}

SparseOperator assemble_surface_stiffness(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs,
                                          double alpha) {
    Triplets t;
    const int k = mesh.dim;
    for (std::size_t f = 0; f < surf.size(); ++f) {
        const FacetGeometry g = facet_geometry(mesh, surf, static_cast<int>(f));
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
                t.emplace_back(dofs.vertex_dof[surf.facets[f][a]], dofs.vertex_dof[surf.facets[f][b]],
                               alpha * g.measure * g.grad[a].dot(g.grad[b]));
    }
    return {from_triplets(dofs.n_dofs, t), OperatorKind::SurfaceStiffness};
}

SparseOperator assemble_surface_mass(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs) {
    Triplets t;
    const int k = mesh.dim;
    const double denom = k * (k + 1);
    for (std::size_t f = 0; f < surf.size(); ++f) {
        const double m = facet_geometry(mesh, surf, static_cast<int>(f)).measure;
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
                t.emplace_back(dofs.vertex_dof[surf.facets[f][a]], dofs.vertex_dof[surf.facets[f][b]],
                               m * (a == b ? 2.0 : 1.0) / denom);
    }
    return {from_triplets(dofs.n_dofs, t), OperatorKind::SurfaceSource};
}

Vector assemble_gradient_load(const CellMesh& mesh, const DofMap& dofs, const PhaseCoefficients& c, const Point& e) {
    Vector l = Vector::Zero(dofs.n_dofs);
    for (std::size_t el = 0; el < mesh.elements.size(); ++el) {
        const double lam = c.at(mesh.elements[el].phase);
        if (lam == 0.0) continue;
        const ElementGeometry g = element_geometry(mesh, static_cast<int>(el));
        for (int a = 0; a <= mesh.dim; ++a)
            l[dofs.vertex_dof[mesh.elements[el].v[a]]] += lam * g.volume * e.dot(g.grad[a]);
    }
    return l;
}

Vector assemble_surface_gradient_load(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs,
                                      double alpha, const Point& e) {
    Vector l = Vector::Zero(dofs.n_dofs);
    for (std::size_t f = 0; f < surf.size(); ++f) {
        const FacetGeometry g = facet_geometry(mesh, surf, static_cast<int>(f));
        const Point& nu = surf.normals[f];
        const Point pe = e - nu.dot(e) * nu;
        for (int a = 0; a < mesh.dim; ++a) l[dofs.vertex_dof[surf.facets[f][a]]] += alpha * g.measure * pe.dot(g.grad[a]);
    }
    return l;
}

Vector volume_weights(const CellMesh& mesh, const DofMap& dofs) {
    Vector w = Vector::Zero(dofs.n_dofs);
    const int nv = mesh.dim + 1;
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const double vol = std::abs(simplex_volume(mesh, static_cast<int>(e)));
        for (int a = 0; a < nv; ++a) w[dofs.vertex_dof[mesh.elements[e].v[a]]] += vol / nv;
    }
    return w;
}

Vector surface_weights(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs) {
    Vector w = Vector::Zero(dofs.n_dofs);
    for (std::size_t f = 0; f < surf.size(); ++f)
        for (int a = 0; a < mesh.dim; ++a) w[dofs.vertex_dof[surf.facets[f][a]]] += surf.measure[f] / mesh.dim;
    return w;
}

std::vector<std::vector<int>> surface_component_dofs(const SurfaceMesh& surf, const DofMap& dofs) {
    std::vector<std::set<int>> sets(surf.n_components);
    for (std::size_t f = 0; f < surf.size(); ++f)
        for (int a = 0; a < surf.dim; ++a) sets[surf.component[f]].insert(dofs.vertex_dof[surf.facets[f][a]]);
    std::vector<std::vector<int>> out;
    for (auto& s : sets) out.emplace_back(s.begin(), s.end());
    return out;
}

Vector surface_flux_jump(const CellMesh& mesh, const SurfaceMesh& surf, const DofMap& dofs,
                         const PhaseCoefficients& c, const Vector& u) {
    Vector j(static_cast<Eigen::Index>(surf.size()));
    for (std::size_t f = 0; f < surf.size(); ++f) {
        const int ei = surf.elem_int[f], eo = surf.elem_out[f];
        if (ei < 0 || eo < 0) throw Error(ErrorCode::MissingAdjacency, "interface facet lacks an adjacent element");
        const Point& nu = surf.normals[f];
        j[f] = c.at(mesh.elements[eo].phase) * element_gradient(mesh, dofs, eo, u).dot(nu) -
               c.at(mesh.elements[ei].phase) * element_gradient(mesh, dofs, ei, u).dot(nu);
    }
    return j;
}

SparseMatrix restrict_matrix(const SparseMatrix& K, const std::vector<int>& dofs) {
    std::vector<int> map(K.rows(), -1);
    for (std::size_t i = 0; i < dofs.size(); ++i) map[dofs[i]] = static_cast<int>(i);
    Triplets t;
    for (int col = 0; col < K.outerSize(); ++col) {
        if (map[col] < 0) continue;
        for (SparseMatrix::InnerIterator it(K, col); it; ++it)
            if (map[it.row()] >= 0) t.emplace_back(map[it.row()], map[col], it.value());
    }
    return from_triplets(static_cast<int>(dofs.size()), t);
}

struct ConstrainedSolver::Impl {
    SparseMatrix K;  // full operator, used for Dirichlet lifting and residual checks
    std::vector<char> dirichlet;
    std::vector<GaugeGroup> gauges;
    std::vector<int> compact;  // full -> reduced index or -1
    std::vector<int> reduced_to_full;
    SolverKind kind;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt;
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
    SparseMatrix Kr;
};

ConstrainedSolver::ConstrainedSolver(const SparseMatrix& K, std::vector<char> dirichlet,
                                     std::vector<GaugeGroup> gauges, SolverKind kind, double cg_tol)
    : impl_(std::make_unique<Impl>()), n_(static_cast<int>(K.rows())) {
    Impl& I = *impl_;
    I.K = K;
    I.dirichlet = dirichlet.empty() ? std::vector<char>(n_, 0) : std::move(dirichlet);
    I.gauges = std::move(gauges);
    I.kind = kind;
    std::vector<char> drop(I.dirichlet.begin(), I.dirichlet.end());
    for (const auto& g : I.gauges) {
        if (g.dofs.empty()) throw Error(ErrorCode::SingularSystem, "empty gauge group");
        for (int p : g.dofs)
            if (I.dirichlet[p]) throw Error(ErrorCode::SingularSystem, "gauge group contains a Dirichlet dof");
        drop[g.dofs.front()] = 1;
    }
    I.compact.assign(n_, -1);
    for (int p = 0; p < n_; ++p)
        if (!drop[p]) {
            I.compact[p] = static_cast<int>(I.reduced_to_full.size());
            I.reduced_to_full.push_back(p);
        }
    I.Kr = restrict_matrix(K, I.reduced_to_full);
    if (I.Kr.rows() == 0) return;
    if (kind == SolverKind::Direct) {
        I.ldlt.compute(I.Kr);
        if (I.ldlt.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "factorization failed");
        const Vector D = I.ldlt.vectorD();
        const double dmax = D.cwiseAbs().maxCoeff();
        if (!(D.minCoeff() > 1e-12 * dmax))
            throw Error(ErrorCode::SingularSystem, "zero or negative pivot: un-fixed constant mode");
    } else {
        I.cg.setTolerance(cg_tol);
        I.cg.setMaxIterations(20 * static_cast<int>(I.Kr.rows()) + 100);
        I.cg.compute(I.Kr);
        if (I.cg.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "preconditioner setup failed");
    }
}

ConstrainedSolver::~ConstrainedSolver() = default;
ConstrainedSolver::ConstrainedSolver(ConstrainedSolver&&) noexcept = default;
ConstrainedSolver& ConstrainedSolver::operator=(ConstrainedSolver&&) noexcept = default;

Vector ConstrainedSolver::solve(const Vector& b, const Vector& dirichlet_values) const {
    const Impl& I = *impl_;
    Vector x = Vector::Zero(n_);
    Vector r = b;
    if (dirichlet_values.size() == n_) {
        for (int p = 0; p < n_; ++p)
            if (I.dirichlet[p]) x[p] = dirichlet_values[p];
        r -= I.K * x;
    }
    multipliers_.assign(I.gauges.size(), 0.0);
    for (std::size_t g = 0; g < I.gauges.size(); ++g) {
        const auto& G = I.gauges[g];
        double sb = 0.0, sw = 0.0;
        for (std::size_t k = 0; k < G.dofs.size(); ++k) {
            sb += r[G.dofs[k]];
            sw += G.weights[k];
        }
        const double mu = sb / sw;
        multipliers_[g] = mu;
        for (std::size_t k = 0; k < G.dofs.size(); ++k) r[G.dofs[k]] -= mu * G.weights[k];
    }
    const Eigen::Index nr = static_cast<Eigen::Index>(I.reduced_to_full.size());
    Vector rr(nr);
    for (Eigen::Index i = 0; i < nr; ++i) rr[i] = r[I.reduced_to_full[i]];
    if (nr > 0) {
        Vector z;
        if (I.kind == SolverKind::Direct) {
            z = I.ldlt.solve(rr);
        } else {
            z = I.cg.solve(rr);
            if (I.cg.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "conjugate gradient stagnated");
        }
        for (Eigen::Index i = 0; i < nr; ++i) x[I.reduced_to_full[i]] = z[i];
        const double rn = rr.norm();
        if (rn > 0.0) {
            const double res = (I.Kr * z - rr).norm() / rn;
            const double tol = I.kind == SolverKind::Direct ? 1e-10 : 1e-8;
            if (!(res <= tol)) throw Error(ErrorCode::SolverFailure, "linear solve residual too large");
        }
    }
    for (const auto& G : I.gauges) {
        double sw = 0.0, sx = 0.0;
        for (std::size_t k = 0; k < G.dofs.size(); ++k) {
            sw += G.weights[k];
            sx += G.weights[k] * x[G.dofs[k]];
        }
        const double c = (G.target - sx) / sw;
        for (int p : G.dofs) x[p] += c;
    }
    return x;
}

Vector solve_constrained(const SparseMatrix& K, const Vector& b, const std::vector<char>& dirichlet,
                         const std::vector<GaugeGroup>& gauges, SolverKind kind) {
    ConstrainedSolver s(K, dirichlet, gauges, kind);
    return s.solve(b);
}

ExtensionResult constrained_extension(const ExtensionProblem& p) {
    const SparseMatrix& K = *p.K;
    const int n = static_cast<int>(K.rows());
    std::vector<char> dir = p.dirichlet.empty() ? std::vector<char>(n, 0) : p.dirichlet;
    std::vector<int> group_of(n, -1);
    for (std::size_t g = 0; g < p.groups.size(); ++g)
        for (int d : p.groups[g]) group_of[d] = static_cast<int>(g);

    Vector offset = Vector::Zero(n);
    for (int d = 0; d < n; ++d)
        if (dir[d] || group_of[d] >= 0) offset[d] = p.prescribed[d];

    std::vector<int> group_col(p.groups.size(), -1);
    Triplets t;
    int m = 0;
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
        bool fixed = false;
        for (int d : p.groups[g]) fixed = fixed || dir[d];
        if (fixed) continue;
        group_col[g] = m++;
        for (int d : p.groups[g]) t.emplace_back(d, group_col[g], 1.0);
    }
    for (int d = 0; d < n; ++d)
        if (!dir[d] && group_of[d] < 0) t.emplace_back(d, m++, 1.0);
    SparseMatrix P(n, m);
    P.setFromTriplets(t.begin(), t.end());

    const SparseMatrix Kr = SparseMatrix(P.transpose() * K * P);
    Vector rhs = -(K * offset);
    if (p.load.size() == n) rhs += p.load;
    const Vector br = P.transpose() * rhs;

    std::vector<GaugeGroup> gauges;
    if (p.mean_weights.size() == n) {
        const Vector wr = P.transpose() * p.mean_weights;
        GaugeGroup g;
        for (int c = 0; c < m; ++c) {
            g.dofs.push_back(c);
            g.weights.push_back(wr[c]);
        }
        g.target = p.mean_target - p.mean_weights.dot(offset);
        gauges.push_back(std::move(g));
    }
    ConstrainedSolver solver(Kr, {}, std::move(gauges));
    const Vector z = solver.solve(br);
    ExtensionResult res;
    res.u = P * z + offset;
    for (std::size_t g = 0; g < p.groups.size(); ++g) res.constants.push_back(group_col[g] >= 0 ? z[group_col[g]] : 0.0);
    return res;
}

}  // namespace bh
