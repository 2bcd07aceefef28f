#include <doctest.h>

#include "bh/error.hpp"
#include "bh/fem.hpp"

#include <Eigen/Dense>

#include <cmath>

using namespace bh;

namespace {

GeometrySpec disk(double r0, double h) {
    GeometrySpec s;
    s.kind = GeometryKind::Disk2D;
    s.params["r0"] = r0;
    s.h = h;
    return s;
}

GeometrySpec layered(double a, double b, double h) {
    GeometrySpec s;
    s.kind = GeometryKind::Layered2D;
    s.params["a"] = a;
    s.params["b"] = b;
    s.h = h;
    return s;
}

CellMesh unit_triangle() {
    CellMesh m;
    m.dim = 2;
    m.vertices = {Point(0, 0, 0), Point(1, 0, 0), Point(0, 1, 0)};
    m.elements = {{{0, 1, 2, -1}, Phase::Out}};
    return m;
}

double max_abs(const SparseMatrix& A) {
    double m = 0.0;
    for (int k = 0; k < A.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(A, k); it; ++it) m = std::max(m, std::abs(it.value()));
    return m;
}

Vector coordinate(const CellMesh& mesh, const DofMap& dofs, int axis) {
    Vector u(dofs.n_dofs);
    for (int d = 0; d < dofs.n_dofs; ++d) u[d] = mesh.vertices[dofs.dof_vertex[d]][axis];
    return u;
}

// Periodic Poisson −Δu = f with u = sin(2πx)sin(2πy); returns the discrete L2 error.
double periodic_poisson_error(double h) {
    auto [mesh, surf] = build_unit_cell(disk(0.25, h));
    const DofMap dofs = DofMap::periodic(mesh);
    PhaseCoefficients c{1.0, 1.0};
    const SparseMatrix K = assemble_bulk_stiffness(mesh, dofs, c).matrix;
    const SparseMatrix M = assemble_bulk_mass(mesh, dofs).matrix;
    Vector exact(dofs.n_dofs);
    for (int d = 0; d < dofs.n_dofs; ++d) {
        const Point& x = mesh.vertices[dofs.dof_vertex[d]];
        exact[d] = std::sin(2 * M_PI * x.x()) * std::sin(2 * M_PI * x.y());
    }
    const Vector b = M * (8 * M_PI * M_PI * exact);
    const Vector w = volume_weights(mesh, dofs);
    GaugeGroup g;
    for (int d = 0; d < dofs.n_dofs; ++d) {
        g.dofs.push_back(d);
        g.weights.push_back(w[d]);
    }
    g.target = w.dot(exact);
    const Vector u = solve_constrained(K, b, {}, {g});
    const Vector e = u - exact;
    return std::sqrt(e.dot(M * e));
}

}  // namespace

TEST_CASE("element stiffness of the unit triangle") {
    CellMesh m = unit_triangle();
    const DofMap dofs = DofMap::identity(m);
    const SparseMatrix K = assemble_bulk_stiffness(m, dofs, {1.0, 1.0}).matrix;
    Eigen::Matrix3d expected;
    expected << 1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5;
    CHECK((Eigen::Matrix3d(K) - expected).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((Eigen::Matrix3d(K) * Eigen::Vector3d::Ones()).cwiseAbs().maxCoeff() < 1e-15);

    const SparseMatrix K2 = assemble_bulk_stiffness(m, dofs, {2.0, 2.0}).matrix;
    CHECK(max_abs(SparseMatrix(K2 - 2.0 * K)) == 0.0);
}

TEST_CASE("non-positive coefficients are rejected") {
    CellMesh m = unit_triangle();
    const DofMap dofs = DofMap::identity(m);
    try {
        assemble_bulk_stiffness(m, dofs, {1.0, -1.0});
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonpositiveCoefficient);
    }
}

TEST_CASE("operators are symmetric with constants in the kernel") {
    for (const auto& spec : {disk(0.25, 0.05), layered(0.25, 0.75, 0.05)}) {
        auto [mesh, surf] = build_unit_cell(spec);
        const DofMap dofs = DofMap::periodic(mesh);
        const SparseMatrix K = assemble_bulk_stiffness(mesh, dofs, {1.0, 3.0}).matrix;
        const SparseMatrix S = assemble_surface_stiffness(mesh, surf, dofs).matrix;
        for (const SparseMatrix* A : {&K, &S}) {
            CHECK(max_abs(SparseMatrix(*A - SparseMatrix(A->transpose()))) <= 1e-14 * max_abs(*A));
            const Vector one = Vector::Ones(A->rows());
            CHECK((*A * one).cwiseAbs().maxCoeff() <= 1e-12 * max_abs(*A));
        }
    }
}

TEST_CASE("quadratic form of y1 gives lambda0") {
    for (double h : {0.04, 0.02}) {
        auto [mesh, surf] = build_unit_cell(disk(0.25, h));
        const DofMap dofs = DofMap::identity(mesh);
        const SparseMatrix K = assemble_bulk_stiffness(mesh, dofs, {1.0, 3.0}).matrix;
        const Vector y1 = coordinate(mesh, dofs, 0);
        const double lam0 = 1.0 * phase_volume(mesh, Phase::Int) + 3.0 * phase_volume(mesh, Phase::Out);
        CHECK(y1.dot(K * y1) == doctest::Approx(lam0).epsilon(1e-12));
        const double exact = M_PI / 16 + 3.0 * (1 - M_PI / 16);
        CHECK(std::abs(y1.dot(K * y1) - exact) < 10 * h * h);
    }
}

TEST_CASE("surface stiffness on a segment chain is the 1D stiffness") {
    auto [mesh, surf] = build_unit_cell(layered(0.25, 0.75, 0.25));
    const DofMap dofs = DofMap::periodic(mesh);
    const SparseMatrix S = assemble_surface_stiffness(mesh, surf, dofs).matrix;
    for (std::size_t f = 0; f < surf.size(); ++f) {
        const int p = dofs.vertex_dof[surf.facets[f][0]];
        const int q = dofs.vertex_dof[surf.facets[f][1]];
        CHECK(S.coeff(p, q) == doctest::Approx(-1.0 / surf.measure[f]));
    }
    const Vector one = Vector::Ones(dofs.n_dofs);
    CHECK((S * one).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("surface energy of y1 on a circle tends to pi r0") {
    double err_prev = 0.0;
    for (double h : {0.04, 0.02, 0.01}) {
        auto [mesh, surf] = build_unit_cell(disk(0.25, h));
        const DofMap dofs = DofMap::identity(mesh);
        const SparseMatrix S = assemble_surface_stiffness(mesh, surf, dofs).matrix;
        const Vector y1 = coordinate(mesh, dofs, 0);
        const double err = std::abs(y1.dot(S * y1) - M_PI * 0.25);
        if (err_prev > 0.0) CHECK(err_prev / err > 3.0);
        err_prev = err;
    }
    CHECK(err_prev < 1e-3);
}

TEST_CASE("intrinsic and projected tangential gradients agree") {
    GeometrySpec t;
    t.kind = GeometryKind::TubeLattice3D;
    t.params["rho"] = 0.25;
    t.h = 1.0 / 6;
    for (const auto& spec : {disk(0.25, 0.05), t}) {
        auto [mesh, surf] = build_unit_cell(spec);
        for (std::size_t f = 0; f < surf.size(); ++f) {
            const FacetGeometry a = facet_geometry(mesh, surf, static_cast<int>(f));
            const FacetGeometry b = facet_geometry_projected(mesh, surf, static_cast<int>(f));
            CHECK(a.measure == doctest::Approx(b.measure).epsilon(1e-12));
            for (int k = 0; k < mesh.dim; ++k) {
                const double scale = a.grad[k].norm();
                CHECK((a.grad[k] - b.grad[k]).norm() <= 1e-12 * scale);
                CHECK(std::abs(a.grad[k].dot(surf.normals[f])) <= 1e-12 * scale);
            }
        }
    }
}

TEST_CASE("degenerate facets are a hard error") {
    CellMesh m;
    m.dim = 2;
    m.vertices = {Point(0, 0, 0), Point(1e-15, 0, 0)};
    SurfaceMesh s;
    s.dim = 2;
    s.facets = {{0, 1, -1}};
    s.normals = {Point(0, 1, 0)};
    s.measure = {1e-15};
    s.component = {0};
    s.n_components = 1;
    const DofMap dofs = DofMap::identity(m);
    try {
        assemble_surface_stiffness(m, s, dofs);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateFacet);
    }
}

TEST_CASE("flux jump of simple fields") {
    auto [mesh, surf] = build_unit_cell(disk(0.25, 0.05));
    const DofMap dofs = DofMap::identity(mesh);
    const Vector y1 = coordinate(mesh, dofs, 0);
    const Vector uniform = surface_flux_jump(mesh, surf, dofs, {2.0, 2.0}, y1);
    CHECK(uniform.cwiseAbs().maxCoeff() < 1e-12);
    const Vector jump = surface_flux_jump(mesh, surf, dofs, {1.0, 3.0}, y1);
    for (std::size_t f = 0; f < surf.size(); ++f) CHECK(jump[f] == doctest::Approx(2.0 * surf.normals[f].x()));

    SurfaceMesh broken = surf;
    broken.elem_out[0] = -1;
    CHECK_THROWS_AS(surface_flux_jump(mesh, broken, dofs, {1.0, 3.0}, y1), Error);
}

TEST_CASE("constrained solves") {
    SUBCASE("zero right-hand side with mean-zero gauge") {
        auto [mesh, surf] = build_unit_cell(disk(0.25, 0.05));
        const DofMap dofs = DofMap::periodic(mesh);
        const SparseMatrix K = assemble_bulk_stiffness(mesh, dofs, {1.0, 3.0}).matrix;
        const Vector w = volume_weights(mesh, dofs);
        GaugeGroup g;
        for (int d = 0; d < dofs.n_dofs; ++d) {
            g.dofs.push_back(d);
            g.weights.push_back(w[d]);
        }
        const Vector x = solve_constrained(K, Vector::Zero(dofs.n_dofs), {}, {g});
        CHECK(x.cwiseAbs().maxCoeff() == 0.0);
        CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("two dofs with known inverse") {
        SparseMatrix K(2, 2);
        K.insert(0, 0) = 2.0;
        K.insert(0, 1) = -1.0;
        K.insert(1, 0) = -1.0;
        K.insert(1, 1) = 2.0;
        Vector b(2);
        b << 1.0, 0.0;
        const Vector x = solve_constrained(K, b, {}, {});
        CHECK(x[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(x[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        const Vector y = solve_constrained(K, b, {}, {}, SolverKind::ConjugateGradient);
        CHECK((x - y).norm() < 1e-10);
    }
    SUBCASE("un-fixed constant mode is reported") {
        auto [mesh, surf] = build_unit_cell(disk(0.25, 0.1));
        const DofMap dofs = DofMap::periodic(mesh);
        const SparseMatrix K = assemble_bulk_stiffness(mesh, dofs, {1.0, 1.0}).matrix;
        try {
            ConstrainedSolver s(K, {}, {});
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::SingularSystem);
        }
    }
    SUBCASE("Dirichlet elimination reproduces affine fields") {
        auto [mesh, surf] = build_unit_cell(disk(0.25, 0.05));
        std::vector<char> bnd(mesh.vertices.size(), 0);
        for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
            const Point& x = mesh.vertices[v];
            bnd[v] = x.x() == 0.0 || x.x() == 1.0 || x.y() == 0.0 || x.y() == 1.0;
        }
        const DofMap dofs = DofMap::with_dirichlet(mesh, bnd);
        const SparseMatrix K = assemble_bulk_stiffness(mesh, dofs, {1.0, 1.0}).matrix;
        Vector g(dofs.n_dofs);
        for (int d = 0; d < dofs.n_dofs; ++d) g[d] = 1.0 + 2.0 * mesh.vertices[d].x() - mesh.vertices[d].y();
        ConstrainedSolver s(K, dofs.dirichlet, {});
        const Vector x = s.solve(Vector::Zero(dofs.n_dofs), g);
        CHECK((x - g).cwiseAbs().maxCoeff() < 1e-12);
        ConstrainedSolver cg(K, dofs.dirichlet, {}, SolverKind::ConjugateGradient);
        CHECK((cg.solve(Vector::Zero(dofs.n_dofs), g) - g).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("periodic Poisson converges at second order") {
    const double e1 = periodic_poisson_error(0.04);
    const double e2 = periodic_poisson_error(0.02);
    const double e3 = periodic_poisson_error(0.01);
    CHECK(e1 / e2 > 3.0);
    CHECK(e2 / e3 > 3.0);
    CHECK(e1 / e2 < 5.0);
}

TEST_CASE("constrained extension keeps group traces up to a constant") {
    auto [mesh, surf] = build_unit_cell(disk(0.25, 0.05));
    const DofMap dofs = DofMap::periodic(mesh);
    const SparseMatrix K = assemble_bulk_stiffness(mesh, dofs, {1.0, 3.0}).matrix;
    const auto comps = surface_component_dofs(surf, dofs);
    ExtensionProblem p;
    p.K = &K;
    p.groups = comps;
    p.prescribed = Vector::Zero(dofs.n_dofs);
    for (int d : comps[0]) p.prescribed[d] = std::cos(7.0 * mesh.vertices[dofs.dof_vertex[d]].x());
    p.mean_weights = volume_weights(mesh, dofs);
    const ExtensionResult r = constrained_extension(p);
    CHECK(p.mean_weights.dot(r.u) == doctest::Approx(0.0).epsilon(1e-14));
    for (int d : comps[0]) CHECK(r.u[d] - p.prescribed[d] == doctest::Approx(r.constants[0]).epsilon(1e-12));
    // Harmonic off the groups, and the group-total flux vanishes.
    const Vector Ku = K * r.u;
    std::vector<char> on_gamma(dofs.n_dofs, 0);
    for (int d : comps[0]) on_gamma[d] = 1;
    double total = 0.0, scale = 0.0;
    for (int d = 0; d < dofs.n_dofs; ++d) {
        scale = std::max(scale, std::abs(Ku[d]));
        if (on_gamma[d]) total += Ku[d];
    }
    for (int d = 0; d < dofs.n_dofs; ++d)
        if (!on_gamma[d]) CHECK(std::abs(Ku[d]) < 1e-10 * scale);
    CHECK(std::abs(total) < 1e-10 * scale);
}
