#include <doctest.h>

#include "bh/error.hpp"
#include "bh/macro_solver.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace bh;

namespace {

constexpr double pi = std::numbers::pi;

double sinsin(const Point& x) { return std::sin(pi * x[0]) * std::sin(pi * x[1]); }

// Hand-built isotropic tensors: λ₀ = l0, A⁰ = a·I, C⁰ = c·I, B⁰(t) = b(t)·I, Φ ≡ phi·I.
EffectiveTensors iso(double l0, double a, double c, const std::function<double(double)>& b, TimeGrid grid,
                     double phi = 0.0) {
    EffectiveTensors t;
    t.dim = 2;
    t.lambda0 = l0;
    t.A0.lambda0 = l0;
    t.A0.volume = a * Matrix::Identity(2, 2);
    t.C0.primary = c * Matrix::Identity(2, 2);
    t.grid = grid;
    for (int n = 0; n <= grid.steps; ++n) {
        DualForm d;
        d.primary = b(grid.time(n)) * Matrix::Identity(2, 2);
        t.B0.push_back(d);
        DualForm p;
        p.primary = phi * Matrix::Identity(2, 2);
        t.Phi.push_back(p);
    }
    t.Ahom_kgt1 = (l0 + a) * Matrix::Identity(2, 2);
    return t;
}

double err_at_end(const MacroMesh& m, const TransientField& u, const std::function<double(const Point&)>& exact) {
    return l2_norm(m.mesh, u.values.back() - interpolate(m.mesh, exact));
}

}  // namespace

TEST_CASE("macro mesh") {
    const MacroMesh m2 = build_macro_mesh(2, 4);
    CHECK(m2.mesh.vertices.size() == 25);
    CHECK(m2.mesh.elements.size() == 32);
    const MacroMesh m3 = build_macro_mesh(3, 3);
    CHECK(m3.mesh.elements.size() == 6 * 27);
    double vol = 0.0;
    for (std::size_t e = 0; e < m3.mesh.elements.size(); ++e) {
        const double v = simplex_volume(m3.mesh, static_cast<int>(e));
        CHECK(v > 0.0);
        vol += v;
    }
    CHECK(vol == doctest::Approx(1.0).epsilon(1e-13));
    int nb = 0;
    for (char b : m3.on_boundary) nb += b;
    CHECK(nb == 64 - 8);
}

TEST_CASE("zero data gives zero") {
    const MacroMesh m = build_macro_mesh(2, 8);
    const TimeGrid g = TimeGrid::from_horizon(0.1, 0.02);
    const EffectiveTensors t = iso(1.0, 0.2, 0.3, [](double s) { return std::exp(-s); }, g, 0.4);
    for (Regime r : {Regime::K1ConnectedConnected, Regime::K1ConnectedDisconnected, Regime::KGreaterThan1}) {
        MacroProblem p{&m, &t, {}, {}, g, r};
        for (const auto& v : solve_macro(p).values) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("energy decays without memory and source") {
    const MacroMesh m = build_macro_mesh(2, 10);
    const TimeGrid g = TimeGrid::from_horizon(1.0, 0.05);
    const EffectiveTensors t = iso(1.0, 0.5, 0.3, [](double) { return 0.0; }, g);
    MacroProblem p{&m, &t, sinsin, {}, g, Regime::K1ConnectedConnected};
    const TransientField u = solve_macro(p);
    const DofMap dofs = DofMap::identity(m.mesh);
    const SparseMatrix K = flux_stiffness(directional_stiffness(m.mesh, dofs), t.lambda0_I_plus_A0());
    double prev = u.values[0].dot(K * u.values[0]);
    for (std::size_t n = 1; n < u.values.size(); ++n) {
        const double e = u.values[n].dot(K * u.values[n]);
        CHECK(e <= prev);
        prev = e;
    }
    CHECK(prev < 0.5 * u.values[0].dot(K * u.values[0]));
}

TEST_CASE("manufactured solution with memory") {
    // u = sin(πx)sin(πy)e^{−t}, C⁰ = cI, λ₀I + A⁰ = I, B⁰ = βI:
    // f = 2π² s [−c e^{−t} + e^{−t} + β(1 − e^{−t})].
    const double c = 0.5, beta = 0.7, T = 0.5;
    auto run = [&](int n, double dt) {
        const MacroMesh m = build_macro_mesh(2, n);
        const TimeGrid g = TimeGrid::from_horizon(T, dt);
        const EffectiveTensors t = iso(1.0, 0.0, c, [&](double) { return beta; }, g);
        MacroProblem p{&m, &t, sinsin,
                       [&](const Point& x, double s) {
                           return 2 * pi * pi * sinsin(x) * ((1.0 - c) * std::exp(-s) + beta * (1.0 - std::exp(-s)));
                       },
                       g, Regime::K1ConnectedConnected};
        const TransientField u = solve_macro(p);
        return err_at_end(m, u, [&](const Point& x) { return sinsin(x) * std::exp(-T); });
    };
    SUBCASE("second order in h") {
        const double e1 = run(8, 0.5 / 256), e2 = run(16, 0.5 / 256), e3 = run(32, 0.5 / 256);
        CHECK(e1 / e2 > 3.0);
        CHECK(e1 / e2 < 4.5);
        CHECK(e2 / e3 > 2.5);
    }
    SUBCASE("first order in dt") {
        const double e1 = run(64, 0.1), e2 = run(64, 0.05), e3 = run(64, 0.025);
        CHECK(e1 / e2 > 1.5);
        CHECK(e1 / e2 < 2.5);
        CHECK(e2 / e3 > 1.5);
        CHECK(e2 / e3 < 2.5);
    }
}

TEST_CASE("linearity and causality") {
    const MacroMesh m = build_macro_mesh(2, 8);
    const TimeGrid g = TimeGrid::from_horizon(0.2, 0.02);
    const EffectiveTensors t = iso(1.0, 0.1, 0.3, [](double s) { return -0.4 * std::exp(-3 * s); }, g, 0.2);
    auto bump = [](const Point& x) { return x[0] * (1 - x[0]) * x[1] * (1 - x[1]); };
    auto src = [](const Point& x, double s) { return std::cos(s) * x[0]; };
    const TransientField a = solve_macro({&m, &t, sinsin, {}, g, Regime::K1ConnectedConnected});
    const TransientField b = solve_macro({&m, &t, bump, src, g, Regime::K1ConnectedConnected});
    const TransientField ab = solve_macro(
        {&m, &t, [&](const Point& x) { return sinsin(x) + bump(x); }, src, g, Regime::K1ConnectedConnected});
    for (std::size_t n = 0; n < ab.values.size(); ++n)
        CHECK((ab.values[n] - a.values[n] - b.values[n]).cwiseAbs().maxCoeff() <= 1e-12);

    // Corrupting kernel samples beyond t_5 leaves the first five levels unchanged.
    EffectiveTensors t2 = t;
    for (std::size_t k = 6; k < t2.B0.size(); ++k) t2.B0[k].primary *= 17.0;
    const TransientField c = solve_macro({&m, &t2, sinsin, {}, g, Regime::K1ConnectedConnected});
    for (int n = 0; n <= 5; ++n) CHECK((c.values[n] - a.values[n]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((c.values[7] - a.values[7]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("disconnected regime starts from the elliptic t = 0 equation") {
    const MacroMesh m = build_macro_mesh(2, 8);
    const TimeGrid g = TimeGrid::from_horizon(0.1, 0.02);
    const EffectiveTensors t = iso(1.2, 0.1, 5.0, [](double) { return 0.0; }, g, 0.3);
    const TransientField u = solve_macro({&m, &t, sinsin, {}, g, Regime::K1ConnectedDisconnected});
    // With B⁰ = 0 and constant Φ every level solves the same elliptic problem:
    // −1.3Δu = −0.3Δū₀ ⇒ u = (0.3/1.3)·ū₀ up to the consistent discrete projection.
    const DofMap dofs = DofMap::with_dirichlet(m.mesh, m.on_boundary);
    const auto parts = directional_stiffness(m.mesh, dofs);
    const Vector u0 = interpolate(m.mesh, sinsin);
    const Vector expect = (-0.3 / 1.3) * u0;
    for (const auto& v : u.values)
        for (int k = 0; k < v.size(); ++k)
            if (!m.on_boundary[k]) CHECK(std::abs(v[k] - expect[k]) <= 1e-12);
}

TEST_CASE("elliptic regimes") {
    SUBCASE("k>1 manufactured solution") {
        const double lam = 1.6;
        std::vector<double> errs;
        for (int n : {8, 16, 32}) {
            const MacroMesh m = build_macro_mesh(2, n);
            const TimeGrid g = TimeGrid::from_horizon(0.1, 0.1);
            const EffectiveTensors t = iso(lam, 0.0, 0.0, [](double) { return 0.0; }, g);
            const TransientField u = solve_macro(
                {&m, &t, {}, [&](const Point& x, double) { return 2 * pi * pi * lam * sinsin(x); }, g,
                 Regime::KGreaterThan1});
            errs.push_back(err_at_end(m, u, sinsin));
        }
        CHECK(errs[0] / errs[1] > 3.0);
        CHECK(errs[0] / errs[1] < 4.5);
        CHECK(errs[1] / errs[2] > 3.0);
        CHECK(errs[1] / errs[2] < 4.5);
    }
    SUBCASE("k<1 with connected phases returns the zero limit") {
        const MacroMesh m = build_macro_mesh(2, 4);
        const TimeGrid g = TimeGrid::from_horizon(0.1, 0.05);
        const EffectiveTensors t = iso(1.0, 0.0, 1.0, [](double) { return 0.0; }, g);
        const TransientField u = solve_macro({&m, &t, {}, [](const Point&, double) { return 1.0; }, g,
                                              Regime::KLessThan1});
        CHECK(u.zero_limit);
        for (const auto& v : u.values) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("solution archive, summary and vtk") {
    const MacroMesh m = build_macro_mesh(2, 4);
    const TimeGrid g = TimeGrid::from_horizon(0.04, 0.02);
    const EffectiveTensors t = iso(1.0, 0.1, 0.3, [](double s) { return s; }, g);
    const TransientField u = solve_macro({&m, &t, sinsin, {}, g, Regime::K1ConnectedConnected});
    std::ostringstream os;
    write_solution_archive(os, u, "test");
    std::istringstream is(os.str());
    const TransientField back = read_solution_archive(is);
    CHECK(back.values.size() == 3);
    CHECK((back.values[2] - u.values[2]).cwiseAbs().maxCoeff() == 0.0);

    std::ostringstream csv;
    write_summary_csv(csv, m.mesh, u, t.lambda0_I_plus_A0());
    std::istringstream cs(csv.str());
    std::string header;
    std::getline(cs, header);
    CHECK(header == "t, L2_norm, energy_norm");

    std::ostringstream vtk;
    write_vtk(vtk, m.mesh, u.values[0], "u");
    CHECK(vtk.str().find("POINTS 25 double") != std::string::npos);
    CHECK(vtk.str().find("CELLS 32 128") != std::string::npos);
}
