#include <doctest.h>

#include "bh/effective_tensors.hpp"
#include "bh/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace bh;

namespace {

GeometrySpec disk(double h, double r0 = 0.25) {
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

struct Setup {
    CellMesh mesh;
    SurfaceMesh surf;
    std::unique_ptr<CellSystem> sys;
    CellFunctionSet cells;
    Setup(const GeometrySpec& g, Coefficients c, TimeGrid grid = TimeGrid::from_horizon(0.1, 0.01)) {
        auto p = build_unit_cell(g);
        mesh = std::move(p.first);
        surf = std::move(p.second);
        sys = std::make_unique<CellSystem>(mesh, surf, c);
        cells = compute_cell_functions(*sys, grid);
    }
};

double max_abs(const Matrix& M) { return M.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("lambda0 from phase volumes") {
    auto [m1, s1] = build_unit_cell(layered(0.05));
    CHECK(compute_lambda0(m1, {1.0, 3.0, 1.0}) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(compute_lambda0(m1, {2.5, 2.5, 1.0}) == doctest::Approx(2.5).epsilon(1e-14));
    auto [m2, s2] = build_unit_cell(disk(0.01));
    const double area = std::numbers::pi / 16;
    CHECK(std::abs(compute_lambda0(m2, {1.0, 2.0, 1.0}) - (area + 2.0 * (1.0 - area))) <= 1e-3);
}

TEST_CASE("C0 on the disk vanishes") {
    // χ₀^j + y_j is constant on each discrete Γ component, so both forms sit at round-off.
    for (double h : {0.04, 0.02}) {
        Setup s(disk(h), {1.0, 3.0, 1.0});
        const DualForm C = compute_C0(*s.sys, s.cells.chi0);
        const double scale = s.surf.total_measure();
        CHECK(C.discrepancy <= 1e-12 * scale);
        CHECK(max_abs(C.primary) <= 1e-12 * scale);
        CHECK(max_abs(C.secondary) <= 1e-12 * scale);
    }
}

TEST_CASE("C0 on the layered cell is diag(2 alpha, 0)") {
    for (double alpha : {1.0, 0.5}) {
        Setup s(layered(0.05), {1.0, 3.0, alpha});
        const DualForm C = compute_C0(*s.sys, s.cells.chi0);
        CHECK(C.primary(0, 0) == doctest::Approx(2.0 * alpha).epsilon(1e-12));
        CHECK(std::abs(C.primary(0, 1)) <= 1e-12);
        CHECK(std::abs(C.primary(1, 0)) <= 1e-12);
        CHECK(std::abs(C.primary(1, 1)) <= 1e-12);
        CHECK(C.discrepancy <= 1e-12);
    }
}

TEST_CASE("C0 on the tube lattice is positive definite") {
    Setup s(tube(1.0 / 6), {1.0, 3.0, 1.0}, TimeGrid::from_horizon(0.02, 0.01));
    const DualForm C = compute_C0(*s.sys, s.cells.chi0);
    CHECK(asymmetry(C.primary) <= 1e-5);
    const auto e = sym_eigenvalues(C.primary);
    CHECK(e[0] > 0.05 * e[2]);
    CHECK(C.relative() <= 1e-6);
}

TEST_CASE("A0 routes agree and lambda0 I + A0 is coercive") {
    for (const auto& g : {disk(0.04), layered(0.05)}) {
        Setup s(g, {1.0, 3.0, 1.0});
        const A0Result A = compute_A0(*s.sys, s.cells.chi0, s.cells.chi1);
        CHECK(A.discrepancy_surface <= 1e-10 * A.scale);
        CHECK(A.discrepancy_gram <= 1e-10 * A.scale);
        const Matrix full = A.volume + A.lambda0 * Matrix::Identity(2, 2);
        CHECK(asymmetry(full) <= 1e-6);
        CHECK(sym_eigenvalues(full)[0] >= 0.95);
    }
}

TEST_CASE("A0 on the layered cell and disk isotropy") {
    Setup l(layered(0.05), {1.0, 3.0, 1.0});
    const A0Result A = compute_A0(*l.sys, l.cells.chi0, l.cells.chi1);
    CHECK(std::abs(A.volume(0, 0)) <= 1e-12);
    // second direction: harmonic mean 1.5 = λ₀ + A⁰₂₂
    CHECK(A.volume(1, 1) + A.lambda0 == doctest::Approx(1.5).epsilon(1e-10));

    Setup d(disk(0.04), {1.0, 3.0, 1.0});
    const A0Result B = compute_A0(*d.sys, d.cells.chi0, d.cells.chi1);
    CHECK(std::abs(B.volume(0, 0) - B.volume(1, 1)) <= 1e-4 * std::abs(B.volume(0, 0)));
}

TEST_CASE("memory kernel") {
    SUBCASE("vanishes when lambda is uniform on the layered cell") {
        Setup s(layered(0.05), {2.0, 2.0, 1.0});
        for (const auto& d : compute_kernel(*s.sys, s.cells.chi1)) CHECK(max_abs(d.primary) <= 1e-12);
    }
    SUBCASE("volume, surface and surface-pairing forms agree") {
        Setup s(disk(0.05), {1.0, 3.0, 1.0});
        const auto B = compute_kernel(*s.sys, s.cells.chi1);
        CHECK(B[0].scale > 1e-3);
        for (std::size_t n = 0; n < B.size(); ++n) {
            CHECK(B[n].discrepancy <= 1e-10 * B[n].scale);
            const Matrix P = kernel_from_surface_pairing(*s.sys, s.cells.v, s.cells.chi1, static_cast<int>(n));
            if (n > 0) CHECK(max_abs(P - B[n].primary) <= 1e-9 * B[n].scale);
        }
    }
    SUBCASE("first order in the time step") {
        auto at = [](double dt) {
            Setup s(disk(0.08), {1.0, 3.0, 1.0}, TimeGrid::from_horizon(0.08, dt));
            return compute_kernel(*s.sys, s.cells.chi1).back().primary;
        };
        const Matrix a = at(0.02), b = at(0.01), c = at(0.005);
        const double r = max_abs(a - b) / max_abs(b - c);
        CHECK(r > 1.5);
        CHECK(r < 2.5);
    }
    SUBCASE("insensitive to the additive constant of v") {
        Setup s(disk(0.05), {1.0, 3.0, 1.0});
        std::vector<Evolution> shifted;
        for (int j = 0; j < 2; ++j) {
            Vector v = s.cells.v[j];
            for (int d : s.sys->components()[0]) v[d] += 1.0;
            shifted.push_back(evolve_surface_coupled(*s.sys, v, s.cells.grid));
        }
        const auto B = compute_kernel(*s.sys, s.cells.chi1);
        const auto Bs = compute_kernel(*s.sys, shifted);
        for (std::size_t n = 0; n < B.size(); ++n) CHECK(max_abs(B[n].primary - Bs[n].primary) <= 1e-6 * B[0].scale);
        const A0Result A = compute_A0(*s.sys, s.cells.chi0, s.cells.chi1);
        const A0Result As = compute_A0(*s.sys, s.cells.chi0, shifted);
        CHECK(max_abs(A.volume - As.volume) <= 1e-6 * A.scale);
    }
}

TEST_CASE("source coefficients") {
    Setup s(disk(0.05), {2.0, 2.0, 1.0});
    const auto Phi = compute_kernel(*s.sys, s.cells.omega);
    CHECK(max_abs(Phi[1].primary) > 1e-3);
    for (const auto& d : Phi) CHECK(d.discrepancy <= 1e-10 * d.scale);
}

TEST_CASE("k<1 matrix") {
    Setup s(disk(0.04), {1.0, 3.0, 1.0});
    const DualForm A = compute_Ahom_klt1(*s.sys, s.cells.chi0);
    CHECK(A.discrepancy <= 1e-10 * A.scale);
    CHECK(asymmetry(A.primary) <= 1e-6);
    CHECK(sym_eigenvalues(A.primary)[0] >= 0.95);
    const A0Result A0 = compute_A0(*s.sys, s.cells.chi0, s.cells.chi1);
    CHECK(max_abs(A.secondary - A0.gram) <= 1e-12 * A.scale);

    Setup t(disk(0.04), {2.0, 3.0, 2.0});
    const DualForm B = compute_Ahom_klt1(*t.sys, t.cells.chi0);
    CHECK(max_abs(A.primary - B.primary) <= 1e-8 * max_abs(A.primary));

    Setup l(layered(0.1), {1.0, 3.0, 1.0});
    try {
        compute_Ahom_klt1(*l.sys, l.cells.chi0);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::WrongGeometryClass);
    }
}

TEST_CASE("k>1 matrix") {
    {
        auto [m, s] = build_unit_cell(disk(0.05));
        CellSystem sys(m, s, {1.7, 1.7, 1.0});
        const Matrix A = compute_Ahom_kgt1(sys, solve_chi0_tilde(sys));
        CHECK(max_abs(A - 1.7 * Matrix::Identity(2, 2)) <= 1e-10);
    }
    {
        auto [m, s] = build_unit_cell(layered(0.05));
        CellSystem sys(m, s, {1.0, 3.0, 1.0});
        const Matrix A = compute_Ahom_kgt1(sys, solve_chi0_tilde(sys));
        CHECK(A(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
        CHECK(A(1, 1) == doctest::Approx(1.5).epsilon(1e-10));
        CHECK(std::abs(A(0, 1)) <= 1e-10);
    }
    {
        auto [m, s] = build_unit_cell(disk(0.04));
        CellSystem sys(m, s, {1.0, 3.0, 1.0});
        const Matrix A = compute_Ahom_kgt1(sys, solve_chi0_tilde(sys));
        CHECK(asymmetry(A) <= 1e-8);
        const auto e = sym_eigenvalues(A);
        CHECK(e[0] >= 1.0);
        CHECK(e[1] <= 3.0);
    }
}

TEST_CASE("tensor report round trip and kernel interpolation") {
    Setup s(disk(0.08), {1.0, 3.0, 1.0}, TimeGrid::from_horizon(0.04, 0.01));
    EffectiveTensors t = compute_effective_tensors(*s.sys, s.cells);
    t.geometry_hash = "0123456789abcdef";
    t.config_hash = "fedcba9876543210";
    std::ostringstream os;
    write_tensor_report(os, t);
    std::istringstream is(os.str());
    const EffectiveTensors back = read_tensor_report(is);
    std::ostringstream os2;
    write_tensor_report(os2, back);
    CHECK(os.str() == os2.str());
    CHECK(back.has_klt1);
    CHECK(max_abs(back.B0_at(0.015) - 0.5 * (t.B0[1].primary + t.B0[2].primary)) <= 1e-15);
    CHECK_THROWS_AS(back.B0_at(0.05), Error);
}
