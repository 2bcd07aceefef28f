#include <doctest.h>

#include "bh/error.hpp"
#include "bh/micro_solver.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace bh;

namespace {

constexpr double pi = std::numbers::pi;

double sinsin(const Point& x) { return std::sin(pi * x[0]) * std::sin(pi * x[1]); }

GeometrySpec disk(double h) {
    GeometrySpec s;
    s.kind = GeometryKind::Disk2D;
    s.params["r0"] = 0.25;
    s.h = h;
    return s;
}

void check_nonincreasing(const std::vector<double>& L) {
    REQUIRE(!L.empty());
    for (std::size_t n = 1; n < L.size(); ++n) CHECK(L[n] <= L[n - 1] + 1e-12 * L[0]);
}

}  // namespace

TEST_CASE("zero data gives zero") {
    const auto cell = build_unit_cell(disk(0.1));
    const MicroMesh mm = tile_micro_domain(cell.first, 0.25);
    const TransientField u = solve_micro({&mm, {1.0, 3.0, 1.0}, 1.0, {}, {}, TimeGrid::from_horizon(0.1, 0.05)});
    for (const auto& v : u.values) CHECK(v.cwiseAbs().maxCoeff() == 0.0);

    const MembraneMesh mc = build_membrane_cell(disk(0.1), 0.1);
    const MicroMesh mmm = tile_micro_domain(mc.mesh, 0.5, {false});
    const TransientField w = solve_membrane({&mmm, {1.0, 3.0, 1.0}, 0.1, {}, {}, TimeGrid::from_horizon(0.1, 0.05)});
    for (const auto& v : w.values) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("discrete dissipation without source") {
    const auto cell = build_unit_cell(disk(0.1));
    const MicroMesh mm = tile_micro_domain(cell.first, 0.25);
    const TimeGrid g = TimeGrid::from_horizon(0.2, 0.01);
    for (double k : {0.0, 1.0, 2.0}) {
        MicroDiagnostics d;
        solve_micro({&mm, {1.0, 3.0, 1.0}, k, sinsin, {}, g}, &d);
        CHECK(d.surface[0] > 0.0);
        check_nonincreasing(d.lyapunov());
        check_nonincreasing(d.bulk);
        check_nonincreasing(d.surface);
    }
    const MembraneMesh mc = build_membrane_cell(disk(0.05), 0.1);
    const MicroMesh mmm = tile_micro_domain(mc.mesh, 0.5, {false});
    MicroDiagnostics d;
    solve_membrane({&mmm, {1.0, 3.0, 1.0}, 0.1, sinsin, {}, g}, &d);
    CHECK(d.membrane[0] > 0.0);
    check_nonincreasing(d.membrane);
    check_nonincreasing(d.lyapunov());
}

TEST_CASE("initial surface gradient follows the scaled datum") {
    const auto cell = build_unit_cell(disk(0.1));
    const MicroMesh mm = tile_micro_domain(cell.first, 0.25);
    const TimeGrid g = TimeGrid::from_horizon(0.01, 0.01);
    const DofMap dofs = DofMap::identity(mm.mesh);
    const Vector u0 = interpolate(mm.mesh, sinsin);
    for (double k : {0.0, 2.0}) {
        const TransientField u = solve_micro({&mm, {1.0, 3.0, 1.0}, k, sinsin, {}, g});
        const double s = std::pow(0.25, 0.5 * (1.0 - k));
        for (std::size_t f = 0; f < mm.surface.size(); ++f) {
            const Point a = facet_gradient(mm.mesh, mm.surface, dofs, static_cast<int>(f), u.values[0]);
            const Point b = facet_gradient(mm.mesh, mm.surface, dofs, static_cast<int>(f), u0);
            CHECK((a - s * b).norm() <= 1e-10 * (1.0 + s * b.norm()));
        }
    }
}

TEST_CASE("periodic unit cell reproduces the cell evolution") {
    const auto cell = build_unit_cell(disk(0.05));
    CellSystem sys(cell.first, cell.second, {2.0, 2.0, 1.0});
    const Chi0Result chi0 = solve_chi0(sys);
    const auto v = solve_v_init(sys, chi0);
    const TimeGrid g = TimeGrid::from_horizon(0.1, 0.01);
    const Evolution ev = evolve_surface_coupled(sys, v[0], g);
    const auto u = solve_micro_periodic(cell.first, cell.second, {2.0, 2.0, 1.0}, v[0], g);
    REQUIRE(u.size() == ev.X.size());
    for (std::size_t n = 0; n < u.size(); ++n)
        CHECK((u[n] - ev.X[n]).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + ev.X[0].cwiseAbs().maxCoeff()));
}

TEST_CASE("energy stays bounded across eps") {
    // With f = 0: u⁰ minimises a_λ among fields with trace ū₀ + c_i on Γ, so a_λ(u⁰) ≤ a_λ(I_hū₀), and
    // the Lyapunov functional only decreases. The surface term is ε s(I_hū₀) ≤ |Γ| max|∇ū₀|² = |Γ|π².
    const auto cell = build_unit_cell(disk(0.1));
    const double gamma_cell = cell.second.total_measure();
    const double T = 0.2;
    const TimeGrid g = TimeGrid::from_horizon(T, 0.02);
    for (double eps : {0.5, 0.25, 0.125}) {
        const MicroMesh mm = tile_micro_domain(cell.first, eps);
        MicroDiagnostics d;
        solve_micro({&mm, {1.0, 3.0, 1.0}, 1.0, sinsin, {}, g}, &d);
        const DofMap dofs = DofMap::identity(mm.mesh);
        const Vector u0 = interpolate(mm.mesh, sinsin);
        const double a0 = u0.dot(assemble_bulk_stiffness(mm.mesh, dofs, {1.0, 3.0}).matrix * u0);
        CHECK(d.bulk[0] <= a0 * (1.0 + 1e-12));
        CHECK(d.energy_bulk <= T * a0 * (1.0 + 1e-12));
        CHECK(d.energy_surface <= gamma_cell * pi * pi * (1.0 + 1e-12));
    }
}

TEST_CASE("local average") {
    const auto cell = build_unit_cell(disk(0.1));
    const MicroMesh mm = tile_micro_domain(cell.first, 0.25);
    TransientField c;
    c.grid = TimeGrid::from_horizon(0.1, 0.1);
    c.values = {Vector::Constant(static_cast<Eigen::Index>(mm.mesh.vertices.size()), 2.5),
                interpolate(mm.mesh, [](const Point& x) { return x[0]; })};
    const auto avg = local_average(mm, c);
    CHECK(avg[0].size() == 16);
    for (int i = 0; i < 16; ++i) {
        CHECK(avg[0][i] == doctest::Approx(2.5).epsilon(1e-13));
        CHECK(avg[1][i] == doctest::Approx(0.25 * (i % 4) + 0.125).epsilon(1e-13));
    }
    // Jensen: ‖M_ε v‖ ≤ ‖v‖.
    const Vector v = interpolate(mm.mesh, sinsin);
    TransientField s;
    s.grid = c.grid;
    s.values = {v, v};
    CHECK(average_norm(mm, local_average(mm, s)[0]) <= l2_norm(mm.mesh, v));

    // Aligned macro mesh: the average of x₁ against the macro field x₁ is the piecewise-constant error.
    const MacroMesh macro = build_macro_mesh(2, 8);
    TransientField u;
    u.grid = c.grid;
    u.values = {interpolate(macro.mesh, [](const Point& x) { return x[0]; }),
                interpolate(macro.mesh, [](const Point& x) { return x[0]; })};
    // ∫(x − cell centre)² = h²/12 over the unit square with h = 1/4.
    CHECK(average_error(mm, avg, macro, u) == doctest::Approx(std::sqrt(0.1 / 192.0)).epsilon(1e-12));
}

TEST_CASE("point location and cross-mesh norms") {
    const auto a = build_unit_cell(disk(0.1));
    const MicroMesh ma = tile_micro_domain(a.first, 0.5);
    const MembraneMesh mc = build_membrane_cell(disk(0.07), 0.1);
    const MicroMesh mb = tile_micro_domain(mc.mesh, 0.5, {false});
    auto lin = [](const Point& x) { return 1.0 + 2.0 * x[0] - 3.0 * x[1]; };
    const PointLocator loc(mb.mesh);
    const Vector ub = interpolate(mb.mesh, lin);
    for (const Point& x : {Point(0.1, 0.2, 0), Point(0.5, 0.5, 0), Point(0.999, 0.0, 0), Point(1, 1, 0)})
        CHECK(loc.evaluate(ub, x) == doctest::Approx(lin(x)).epsilon(1e-12));
    CHECK_THROWS_AS(loc.evaluate(ub, Point(1.5, 0.5, 0)), Error);

    TransientField fa, fb;
    fa.grid = fb.grid = TimeGrid::from_horizon(0.1, 0.1);
    fa.values = {interpolate(ma.mesh, lin), interpolate(ma.mesh, lin)};
    fb.values = {ub, ub};
    CHECK(l2_time_difference(ma.mesh, fa, mb.mesh, fb) <= 1e-12);
    fb.values[1] = ub + Vector::Ones(ub.size());
    CHECK(l2_time_difference(ma.mesh, fa, mb.mesh, fb) == doctest::Approx(std::sqrt(0.1)).epsilon(1e-10));
}

TEST_CASE("study report") {
    StudyReport r;
    r.rows = {{0.5, 0.3, 1, 2, 0.1}, {0.25, 0.2, 1, 2, 0.1}};
    r.monotone_decrease = true;
    std::ostringstream os;
    write_study_csv(os, r);
    CHECK(os.str().rfind("eps, error_L2, energy_bulk, energy_surface, runtime_s\n", 0) == 0);
    CHECK(os.str().find("monotone_decrease: true\n") != std::string::npos);
    CHECK(strictly_decreasing({3, 2, 1}));
    CHECK_FALSE(strictly_decreasing({3, 3, 1}));
    CHECK_FALSE(strictly_decreasing({1}));
}
