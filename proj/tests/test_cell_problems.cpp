#include <doctest.h>

#include "bh/cell_problems.hpp"
#include "bh/error.hpp"

#include <cmath>
#include <sstream>

using namespace bh;

namespace {

GeometrySpec disk(double r0, double h) {
    GeometrySpec s;
    s.kind = GeometryKind::Disk2D;
    s.params["r0"] = r0;
    s.h = h;
    return s;
}

GeometrySpec layered(double h) {
    GeometrySpec s;
    s.kind = GeometryKind::Layered2D;
    s.params["a"] = 0.25;
    s.params["b"] = 0.75;
    s.h = h;
    return s;
}

GeometrySpec tube(double h) {
    GeometrySpec s;
    s.kind = GeometryKind::TubeLattice3D;
    s.params["rho"] = 0.25;
    s.h = h;
    return s;
}

struct Cell {
    CellMesh mesh;
    SurfaceMesh surf;
    explicit Cell(const GeometrySpec& g) {
        auto p = build_unit_cell(g);
        mesh = std::move(p.first);
        surf = std::move(p.second);
    }
};

double coord(const CellSystem& sys, int d, int axis) { return sys.mesh().vertices[sys.dofs().dof_vertex[d]][axis]; }

}  // namespace

TEST_CASE("disk corrector is rigid inside the inclusion") {
    Cell c(disk(0.25, 0.04));
    CellSystem sys(c.mesh, c.surf, {1.0, 3.0, 1.0});
    const Chi0Result r = solve_chi0(sys);
    std::vector<char> inside(sys.dofs().n_dofs, 0);
    for (const auto& el : c.mesh.elements)
        if (el.phase == Phase::Int)
            for (int k = 0; k < 3; ++k) inside[sys.dofs().vertex_dof[el.v[k]]] = 1;
    for (int j = 0; j < 2; ++j) {
        CHECK(std::abs(sys.volume_weights().dot(r.chi0[j])) <= 1e-10);
        double cmin = 1e300, cmax = -1e300;
        for (int d = 0; d < sys.dofs().n_dofs; ++d)
            if (inside[d]) {
                const double w = r.chi0[j][d] + coord(sys, d, j);
                cmin = std::min(cmin, w);
                cmax = std::max(cmax, w);
            }
        CHECK(cmax - cmin <= 1e-10);
    }
}

TEST_CASE("layered corrector matches the one-dimensional closed form") {
    Cell c(layered(0.05));
    CellSystem sys(c.mesh, c.surf, {1.0, 3.0, 1.0});
    const Chi0Result r = solve_chi0(sys);
    CHECK(r.chi0[0].cwiseAbs().maxCoeff() <= 1e-12);
    // λ_int(1+s_int) = λ_out(1+s_out) and |E_int|s_int + |E_out|s_out = 0.
    const double s_int = 0.5, s_out = -0.5;
    for (std::size_t e = 0; e < c.mesh.elements.size(); ++e) {
        const Point g = element_gradient(c.mesh, sys.dofs(), static_cast<int>(e), r.chi0[1]);
        const double s = c.mesh.elements[e].phase == Phase::Int ? s_int : s_out;
        CHECK(std::abs(g.x()) <= 1e-10);
        CHECK(g.y() == doctest::Approx(s).epsilon(1e-10));
    }
    CHECK(std::abs(sys.volume_weights().dot(r.chi0[1])) <= 1e-12);

    // The solvable corrector carries outer flux ±(λ_int−λ_out)/(2λ_out)·|Γ_i| = ∓0.5 on the two lines.
    const auto flux = outer_flux_integrals(sys, r.chi0[1]);
    REQUIRE(flux.size() == 2);
    CHECK(std::abs(std::abs(flux[0]) - 0.5) <= 1e-10);
    CHECK(std::abs(flux[0] + flux[1]) <= 1e-10);
    for (double f : outer_flux_integrals(sys, r.chi0[0])) CHECK(std::abs(f) <= 1e-10);
}

TEST_CASE("outer flux integrals vanish on disk and tube cells") {
    for (const auto& g : {disk(0.25, 0.04), tube(1.0 / 6)}) {
        Cell c(g);
        CellSystem sys(c.mesh, c.surf, {1.0, 3.0, 1.0});
        const Chi0Result r = solve_chi0(sys);
        for (int j = 0; j < sys.dim(); ++j) {
            const auto flux = outer_flux_integrals(sys, r.chi0[j]);
            for (std::size_t i = 0; i < flux.size(); ++i)
                CHECK(std::abs(flux[i]) <= 1e-8 * c.surf.component_measure(static_cast<int>(i)));
        }
    }
}

TEST_CASE("initial datum v_j") {
    SUBCASE("uniform lambda on the disk: flux functional integrates to zero") {
        Cell c(disk(0.25, 0.04));
        CellSystem sys(c.mesh, c.surf, {2.0, 2.0, 1.0});
        const Chi0Result r = solve_chi0(sys);
        for (int j = 0; j < 2; ++j) CHECK(std::abs(flux_functional(sys, r.chi0[j], j).sum()) <= 1e-12);
        const auto v = solve_v_init(sys, r);
        CHECK(v[0].norm() > 1e-3);
    }
    SUBCASE("zero right-hand side gives zero") {
        Cell c(disk(0.25, 0.05));
        CellSystem sys(c.mesh, c.surf, {1.0, 3.0, 1.0});
        CHECK(sys.surface_solve(Vector::Zero(sys.dofs().n_dofs)).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("layered geometry has v = 0") {
        Cell c(layered(0.05));
        CellSystem sys(c.mesh, c.surf, {1.0, 3.0, 1.0});
        const auto v = solve_v_init(sys, solve_chi0(sys));
        CHECK(v[0].cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(v[1].cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("incompatible flux data is rejected") {
        // With χ₀² ≡ 0 each layer interface carries a net flux jump λ_out − λ_int.
        Cell c(layered(0.05));
        CellSystem sys(c.mesh, c.surf, {1.0, 3.0, 1.0});
        Chi0Result r = solve_chi0(sys);
        r.chi0[1].setZero();
        try {
            solve_v_init(sys, r);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::CompatibilityViolated);
        }
    }
}

TEST_CASE("coupled evolution") {
    Cell c(disk(0.25, 0.05));
    CellSystem sys(c.mesh, c.surf, {1.0, 3.0, 1.0});
    const Chi0Result r = solve_chi0(sys);
    const auto v = solve_v_init(sys, r);
    const TimeGrid grid = TimeGrid::from_horizon(0.5, 0.01);

    SUBCASE("zero initial field stays zero") {
        const Evolution ev = evolve_surface_coupled(sys, Vector::Zero(sys.dofs().n_dofs), grid);
        for (const auto& X : ev.X) CHECK(X.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("energy identity and dissipation") {
        for (const Vector* init : {&v[0], &r.chi0[1]}) {
            const Vector neg = -*init;
            const Evolution ev = evolve_surface_coupled(sys, neg, grid);
            const double E0 = surface_energy(sys, ev.X[0]);
            CHECK(E0 > 0.0);
            for (int n = 1; n <= grid.steps; ++n) {
                const double En = surface_energy(sys, ev.X[n]);
                const double Em = surface_energy(sys, ev.X[n - 1]);
                CHECK(En <= Em + 1e-12 * E0);
                const Vector d = ev.X[n] - ev.X[n - 1];
                const double predicted =
                    -2.0 * grid.dt / sys.coeffs().alpha * ev.X[n].dot(sys.K() * ev.X[n]) - surface_energy(sys, d);
                CHECK(std::abs((En - Em) - predicted) <= 1e-12 * E0);
                CHECK(std::abs(sys.volume_weights().dot(ev.X[n])) <= 1e-12);
            }
        }
    }
    SUBCASE("linearity in the initial field") {
        const Evolution a = evolve_surface_coupled(sys, v[0], grid);
        const Evolution b = evolve_surface_coupled(sys, Vector(2.5 * v[0]), grid);
        for (int n = 0; n <= grid.steps; n += 10)
            CHECK((b.X[n] - 2.5 * a.X[n]).norm() <= 1e-10 * (1.0 + a.X[n].norm()));
    }
    SUBCASE("initial surface gradient matches the datum") {
        const Evolution ev = evolve_surface_coupled(sys, v[0], grid);
        for (std::size_t f = 0; f < c.surf.size(); ++f) {
            const Point a = facet_gradient(c.mesh, c.surf, sys.dofs(), static_cast<int>(f), ev.X[0]);
            const Point b = facet_gradient(c.mesh, c.surf, sys.dofs(), static_cast<int>(f), v[0]);
            CHECK((a - b).norm() <= 1e-10);
        }
    }
    SUBCASE("first order in time") {
        auto at_T = [&](double dt) {
            const Evolution ev = evolve_surface_coupled(sys, v[0], TimeGrid::from_horizon(0.2, dt));
            return ev.X.back();
        };
        const Vector a = at_T(0.02), b = at_T(0.01), d = at_T(0.005);
        const double ratio = surface_energy(sys, Vector(a - b)) / surface_energy(sys, Vector(b - d));
        CHECK(std::sqrt(ratio) > 1.5);
        CHECK(std::sqrt(ratio) < 2.5);
    }
}

TEST_CASE("factorised W is linear in the macroscopic gradient") {
    Cell c(disk(0.25, 0.1));
    CellSystem sys(c.mesh, c.surf, {1.0, 3.0, 1.0});
    const CellFunctionSet set = compute_cell_functions(sys, TimeGrid::from_horizon(0.05, 0.01));
    CHECK(factor_W(set.omega, 3, Point::Zero()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((factor_W(set.omega, 3, Point(1, 0, 0)) - set.omega[0].X[3]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((factor_W(set.omega, 2, Point(2, 0, 0)) - 2.0 * set.omega[0].X[2]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("perfect-contact corrector") {
    SUBCASE("uniform coefficient gives zero") {
        Cell c(disk(0.25, 0.05));
        CellSystem sys(c.mesh, c.surf, {2.0, 2.0, 1.0});
        for (const auto& x : solve_chi0_tilde(sys)) CHECK(x.cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("layered harmonic-mean slopes") {
        Cell c(layered(0.05));
        CellSystem sys(c.mesh, c.surf, {1.0, 3.0, 1.0});
        const auto t = solve_chi0_tilde(sys);
        CHECK(t[0].cwiseAbs().maxCoeff() <= 1e-12);
        for (std::size_t e = 0; e < c.mesh.elements.size(); ++e) {
            const Point g = element_gradient(c.mesh, sys.dofs(), static_cast<int>(e), t[1]);
            CHECK(g.y() == doctest::Approx(c.mesh.elements[e].phase == Phase::Int ? 0.5 : -0.5).epsilon(1e-10));
        }
        for (const auto& x : t) CHECK(std::abs(sys.volume_weights().dot(x)) <= 1e-10);
    }
}

TEST_CASE("cell archive round trip") {
    Cell c(disk(0.25, 0.1));
    CellSystem sys(c.mesh, c.surf, {1.0, 3.0, 1.0});
    const CellFunctionSet set = compute_cell_functions(sys, TimeGrid::from_horizon(0.03, 0.01));
    std::ostringstream os;
    write_cell_archive(os, set, "test");
    std::istringstream is(os.str());
    const CellFunctionSet back = read_cell_archive(is);
    std::ostringstream os2;
    write_cell_archive(os2, back, "test");
    CHECK(os.str() == os2.str());
    CHECK((back.chi1[1].X[2] - set.chi1[1].X[2]).cwiseAbs().maxCoeff() == 0.0);
}
