#include "bh/acceptance.hpp"

#include "bh/effective_tensors.hpp"
#include "bh/error.hpp"
#include "bh/micro_solver.hpp"

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>

namespace bh {

namespace {

constexpr double pi = std::numbers::pi;
const Coefficients base{1.0, 3.0, 1.0};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

GeometrySpec disk(double h) {
    GeometrySpec s;
    s.kind = GeometryKind::Disk2D;
    s.params["r0"] = 0.25;
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

double sinprod(const Point& x, int dim) {
    double s = 1.0;
    for (int d = 0; d < dim; ++d) s *= std::sin(pi * x[d]);
    return s;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// One cell with all cell functions and tensors; the system keeps pointers into the mesh.
struct CellRun {
    std::pair<CellMesh, SurfaceMesh> cell;
    std::unique_ptr<CellSystem> sys;
    CellFunctionSet set;
    EffectiveTensors tensors;
};

std::unique_ptr<CellRun> run_cell(const GeometrySpec& spec, const Coefficients& c, const TimeGrid& grid) {
    auto r = std::make_unique<CellRun>();
    r->cell = build_unit_cell(spec);
    r->sys = std::make_unique<CellSystem>(r->cell.first, r->cell.second, c);
    r->set = compute_cell_functions(*r->sys, grid);
    // The dual routes are judged here, not inside the computation.
    const double inf = std::numeric_limits<double>::infinity();
    r->tensors = compute_effective_tensors(*r->sys, r->set, {inf, inf, inf, inf});
    return r;
}

const TimeGrid kernel_grid = TimeGrid::from_horizon(0.2, 0.01);

class Suite {
public:
    explicit Suite(std::ostream* progress) : progress_(progress) {}

    std::vector<CriterionResult> run() {
        say("cell problems: Disk2D, Layered2D, TubeLattice3D");
        cells_.push_back(run_cell(disk(0.04), base, kernel_grid));
        cells_.push_back(run_cell(layered(0.04), base, kernel_grid));
        cells_.push_back(run_cell(tube(0.125), base, kernel_grid));
        c1();
        c2();
        c3();
        c4();
        c5();
        c6();
        c7();
        c8();
        c9();
        c10();
        c11();
        c12();
        c13();
        return std::move(out_);
    }

private:
    std::ostream* progress_;
    std::vector<std::unique_ptr<CellRun>> cells_;
    std::vector<CriterionResult> out_;

    void say(const std::string& s) {
        if (progress_) *progress_ << "verify: " << s << std::endl;
    }

    CriterionResult& begin(int id, const char* title) {
        say(fmt("criterion %d, %s", id, title));
        out_.push_back({id, title, true, {}});
        return out_.back();
    }

    static void check(CriterionResult& r, bool ok, const std::string& detail) {
        r.pass = r.pass && ok;
        r.details.push_back(std::string(ok ? "ok   " : "FAIL ") + detail);
    }

    static const char* name(const CellRun& c) { return geometry_name(c.cell.first.kind); }

    void c1() {
        auto& r = begin(1, "C0 vanishes for the disk");
        // Discrete C⁰ is zero up to round-off on every level, where a 3x reduction is
        // meaningless; a level passes by the 3x reduction or by sitting at the round-off floor.
        std::vector<double> norms;
        for (double h : {0.04, 0.02, 0.01}) {
            const auto cell = build_unit_cell(disk(h));
            const CellSystem sys(cell.first, cell.second, base);
            const DualForm C0 = compute_C0(sys, solve_chi0(sys));
            const double g = base.alpha * cell.second.total_measure();
            const double n = std::max(max_abs(C0.primary), max_abs(C0.secondary));
            norms.push_back(n);
            if (norms.size() == 1) check(r, n <= 5e-3 * g, fmt("h=%.2f |C0|max=%.3e <= 5e-3*alpha|Gamma|=%.3e", h, n, 5e-3 * g));
            else {
                const double prev = norms[norms.size() - 2];
                const bool floor = n <= 1e-12 * g;
                check(r, floor || prev >= 3.0 * n,
                      fmt("h=%.2f |C0|max=%.3e, %s", h, n, floor ? "at round-off floor 1e-12*alpha|Gamma|" : "reduction >= 3x"));
            }
        }
    }

    void c2() {
        auto& r = begin(2, "layered C0 = diag(2 alpha, 0)");
        const Matrix& C = cells_[1]->tensors.C0.primary;
        const double a = base.alpha;
        check(r, std::abs(C(0, 1)) <= 1e-6 * a && std::abs(C(1, 0)) <= 1e-6 * a,
              fmt("off-diagonal %.3e %.3e <= 1e-6", C(0, 1), C(1, 0)));
        check(r, std::abs(C(1, 1)) <= 1e-6 * a, fmt("C22=%.3e <= 1e-6", C(1, 1)));
        check(r, std::abs(C(0, 0) - 2 * a) <= 1e-4 * 2 * a, fmt("C11=%.9f vs 2 alpha within 1e-4", C(0, 0)));
    }

    void c3() {
        auto& r = begin(3, "tube lattice C0 positive definite");
        const Matrix& C = cells_[2]->tensors.C0.primary;
        const Eigen::VectorXd ev = sym_eigenvalues(C);
        check(r, asymmetry(C) <= 1e-5, fmt("asymmetry %.3e <= 1e-5", asymmetry(C)));
        check(r, ev.minCoeff() > 0.0 && ev.minCoeff() > 0.05 * ev.maxCoeff(),
              fmt("eigenvalues %.6f .. %.6f, ratio %.4f > 0.05", ev.minCoeff(), ev.maxCoeff(), ev.minCoeff() / ev.maxCoeff()));
    }

    void c4() {
        auto& r = begin(4, "lambda0 I + A0 symmetric and coercive");
        for (const auto& c : cells_) {
            const Matrix M = c->tensors.lambda0_I_plus_A0();
            const double mn = sym_eigenvalues(M).minCoeff();
            check(r, asymmetry(M) <= 1e-6 && mn >= 0.95,
                  fmt("%s asymmetry %.3e <= 1e-6, min eigenvalue %.6f >= 0.95", name(*c), asymmetry(M), mn));
        }
    }

    void c5() {
        auto& r = begin(5, "volume and surface/Gram forms agree");
        for (const auto& c : cells_) {
            const auto& t = c->tensors;
            // Same floor as the cross-check in compute_effective_tensors: a kernel that is zero
            // up to round-off (layered cell) has no meaningful relative discrepancy.
            auto rel = [](double d, double scale) { return d / std::max(scale, 1e-12); };
            const double a_s = rel(t.A0.discrepancy_surface, t.A0.scale), a_g = rel(t.A0.discrepancy_gram, t.A0.scale);
            double b = 0.0;
            for (const auto& d : t.B0) b = std::max(b, rel(d.discrepancy, d.scale));
            const double cc = rel(t.C0.discrepancy, t.C0.scale);
            check(r, a_s <= 1e-5 && a_g <= 1e-5 && b <= 1e-5 && cc <= 1e-5,
                  fmt("%s A0 surface %.3e, A0 Gram %.3e, B0 max over %zu samples %.3e, C0 %.3e (all <= 1e-5)", name(*c),
                      a_s, a_g, t.B0.size(), b, cc));
        }
    }

    void c6() {
        auto& r = begin(6, "compatibility of the outer flux of chi0");
        for (const auto& c : cells_) {
            double worst = 0.0;
            for (int j = 0; j < c->sys->dim(); ++j) {
                const auto flux = outer_flux_integrals(*c->sys, c->set.chi0.chi0[j]);
                for (std::size_t i = 0; i < flux.size(); ++i) {
                    const double rel = std::abs(flux[i]) / c->cell.second.component_measure(static_cast<int>(i));
                    worst = std::max(worst, rel);
                    if (rel > 1e-8) check(r, false, fmt("%s j=%d component %zu |flux|/|Gamma_i| = %.3e > 1e-8", name(*c), j + 1, i, rel));
                }
            }
            check(r, worst <= 1e-8, fmt("%s max |flux|/|Gamma_i| = %.3e", name(*c), worst));
        }
    }

    static bool nonincreasing(const std::vector<double>& L) {
        for (std::size_t n = 1; n < L.size(); ++n)
            if (L[n] > L[n - 1] + 1e-12 * L[0]) return false;
        return true;
    }

    void c7() {
        auto& r = begin(7, "discrete energy dissipation");
        for (const auto& c : cells_) {
            const CellSystem& sys = *c->sys;
            bool ok = true;
            for (const auto* family : {&c->set.chi1, &c->set.omega})
                for (const Evolution& ev : *family) {
                    std::vector<double> L;
                    for (const Vector& X : ev.X) L.push_back(X.dot(sys.K() * X) + X.dot(sys.S() * X));
                    ok = ok && L[0] > 0.0 && nonincreasing(L);
                }
            check(r, ok, fmt("%s cell evolutions chi1 and omega", name(*c)));
        }
        const auto cell = build_unit_cell(disk(0.04));
        const MicroMesh mm = tile_micro_domain(cell.first, 0.25);
        auto u0 = [](const Point& x) { return sinprod(x, 2); };
        for (double k : {0.0, 1.0, 2.0}) {
            MicroDiagnostics d;
            solve_micro({&mm, base, k, u0, {}, kernel_grid}, &d);
            const auto L = d.lyapunov();
            check(r, L[0] > 0.0 && nonincreasing(L), fmt("micro Disk2D eps=1/4 k=%g, L0=%.6e", k, L[0]));
        }
        const MembraneMesh mc = build_membrane_cell(disk(0.04), 0.1);
        const MicroMesh mb = tile_micro_domain(mc.mesh, 0.5, {false});
        MicroDiagnostics d;
        solve_membrane({&mb, base, 0.1, u0, {}, kernel_grid}, &d);
        check(r, d.lyapunov()[0] > 0.0 && nonincreasing(d.lyapunov()) && nonincreasing(d.membrane),
              fmt("membrane eps=1/2 eta=0.1, L0=%.6e", d.lyapunov()[0]));
    }

    void c8() {
        auto& r = begin(8, "k>1 homogenized matrix");
        {
            const Coefficients uni{2.0, 2.0, 1.0};
            const auto cell = build_unit_cell(disk(0.04));
            const CellSystem sys(cell.first, cell.second, uni);
            const Matrix A = compute_Ahom_kgt1(sys, solve_chi0_tilde(sys));
            const double err = max_abs(A - 2.0 * Matrix::Identity(2, 2));
            check(r, err <= 1e-10, fmt("Disk2D uniform lambda=2: |A - 2I|max = %.3e <= 1e-10", err));
        }
        const Matrix& A = cells_[1]->tensors.Ahom_kgt1;
        Matrix expect = Matrix::Zero(2, 2);
        expect(0, 0) = 2.0;
        expect(1, 1) = 1.5;
        const double rel = max_abs(A - expect) / 2.0;
        check(r, rel <= 1e-3, fmt("Layered2D: A = [%.6f %.6f; %.6f %.6f], relative error %.3e <= 1e-3", A(0, 0), A(0, 1),
                                  A(1, 0), A(1, 1), rel));
    }

    void c9() {
        auto& r = begin(9, "k<1 insulation collapse on the tube lattice");
        StudyConfig sc;
        sc.cell = tube(0.125);
        sc.coeffs = base;
        sc.k = 0.0;
        sc.f = [](const Point& x, double) { return sinprod(x, 3); };
        sc.grid = TimeGrid::from_horizon(0.2, 0.02);
        sc.eps_list = {0.5, 1.0 / 3.0};
        const StudyReport rep = convergence_study(sc);
        check(r, rep.monotone_decrease,
              fmt("||u_eps|| at eps=1/2: %.6e, eps=1/3: %.6e, strictly decreasing", rep.rows[0].error, rep.rows[1].error));
    }

    void c10() {
        auto& r = begin(10, "k<1 disk matrix independent of lambda_int and alpha");
        const auto& c = *cells_[0];
        const Matrix A = c.tensors.Ahom_klt1.primary;
        const Eigen::VectorXd ev = sym_eigenvalues(A);
        check(r, asymmetry(A) <= 1e-6 && ev.minCoeff() > 0.0,
              fmt("asymmetry %.3e <= 1e-6, min eigenvalue %.6f > 0", asymmetry(A), ev.minCoeff()));
        const CellSystem sys2(c.cell.first, c.cell.second, {2.0 * base.lambda_int, base.lambda_out, 2.0 * base.alpha});
        const Matrix B = compute_Ahom_klt1(sys2, solve_chi0(sys2)).primary;
        const double rel = max_abs(A - B) / max_abs(A);
        check(r, rel <= 1e-8, fmt("lambda_int and alpha doubled: relative change %.3e <= 1e-8", rel));
    }

    void c11() {
        auto& r = begin(11, "k=1 local averages approach the homogenized solution");
        const auto& c = *cells_[0];
        const MacroMesh macro = build_macro_mesh(2, 16);
        auto u0 = [](const Point& x) { return sinprod(x, 2); };
        const TransientField u = solve_macro({&macro, &c.tensors, u0, {}, kernel_grid, Regime::K1ConnectedDisconnected});
        StudyConfig sc;
        sc.cell = disk(0.04);
        sc.coeffs = base;
        sc.k = 1.0;
        sc.u0 = u0;
        sc.grid = kernel_grid;
        sc.eps_list = {0.5, 0.25, 0.125};
        sc.macro = &macro;
        sc.reference = &u;
        const StudyReport rep = convergence_study(sc);
        std::string seq;
        for (const auto& row : rep.rows) seq += fmt(" %.6e", row.error);
        check(r, rep.monotone_decrease, "errors at eps=1/2,1/4,1/8:" + seq + ", strictly decreasing");
    }

    void c12() {
        auto& r = begin(12, "thick membrane approaches the interface problem");
        ConcentrationConfig cc;
        cc.cell = disk(0.04);
        cc.coeffs = base;
        cc.eps = 0.5;
        cc.eta_list = {0.2, 0.1, 0.05};
        cc.u0 = [](const Point& x) { return sinprod(x, 2); };
        cc.grid = kernel_grid;
        cc.tile = {false};
        const StudyReport rep = concentration_study(cc);
        std::string seq;
        for (const auto& row : rep.rows) seq += fmt(" %.6e", row.error);
        check(r, rep.monotone_decrease, "differences at eta=0.2,0.1,0.05:" + seq + ", strictly decreasing");
    }

    static void ratios(CriterionResult& r, const std::string& what, double e1, double e2, double e3) {
        const double q1 = e1 / e2, q2 = e2 / e3;
        check(r, q1 >= 1.5 && q1 <= 4.5 && q2 >= 1.5 && q2 <= 4.5,
              fmt("%s: %.3e %.3e %.3e, ratios %.3f %.3f in [1.5, 4.5]", what.c_str(), e1, e2, e3, q1, q2));
    }

    void c13() {
        auto& r = begin(13, "self-convergence orders");
        // Cell evolution in dt, energy-norm differences at the final time.
        {
            const auto& c = *cells_[0];
            const CellSystem& sys = *c.sys;
            std::vector<Vector> ends;
            for (double dt : {0.02, 0.01, 0.005, 0.0025})
                ends.push_back(evolve_surface_coupled(sys, c.set.v[0], TimeGrid::from_horizon(0.2, dt)).X.back());
            auto en = [&](const Vector& d) { return std::sqrt(d.dot(sys.K() * d) + d.dot(sys.S() * d)); };
            ratios(r, "cell evolution dt differences", en(ends[0] - ends[1]), en(ends[1] - ends[2]), en(ends[2] - ends[3]));
        }
        // Homogenized memory problem against a manufactured solution.
        {
            const double c = 0.5, beta = 0.7, T = 0.5;
            auto solve = [&](int n, double dt) {
                const MacroMesh m = build_macro_mesh(2, n);
                const TimeGrid g = TimeGrid::from_horizon(T, dt);
                EffectiveTensors t;
                t.dim = 2;
                t.lambda0 = 1.0;
                t.A0.lambda0 = 1.0;
                t.A0.volume = Matrix::Zero(2, 2);
                t.C0.primary = c * Matrix::Identity(2, 2);
                t.grid = g;
                for (int k = 0; k <= g.steps; ++k) {
                    DualForm b, p;
                    b.primary = beta * Matrix::Identity(2, 2);
                    p.primary = Matrix::Zero(2, 2);
                    t.B0.push_back(b);
                    t.Phi.push_back(p);
                }
                auto u0 = [](const Point& x) { return sinprod(x, 2); };
                const TransientField u = solve_macro(
                    {&m, &t, u0,
                     [&](const Point& x, double s) {
                         return 2 * pi * pi * sinprod(x, 2) * ((1.0 - c) * std::exp(-s) + beta * (1.0 - std::exp(-s)));
                     },
                     g, Regime::K1ConnectedConnected});
                const Vector e = u.values.back() - interpolate(m.mesh, [&](const Point& x) { return u0(x) * std::exp(-T); });
                return std::make_pair(e, m);
            };
            auto err = [&](int n, double dt) {
                const auto [e, m] = solve(n, dt);
                return l2_norm(m.mesh, e);
            };
            // In h the O(dt) part is removed by extrapolation in dt, so it cannot mask the spatial error.
            auto err_h = [&](int n) {
                const auto [a, m] = solve(n, T / 128);
                const Vector b = solve(n, T / 256).first;
                return l2_norm(m.mesh, 2.0 * b - a);
            };
            ratios(r, "memory problem dt errors", err(64, 0.1), err(64, 0.05), err(64, 0.025));
            ratios(r, "memory problem h errors (dt-extrapolated)", err_h(8), err_h(16), err_h(32));
        }
        // Elliptic k>1 problem against a manufactured solution.
        {
            std::vector<double> e;
            for (int n : {8, 16, 32}) {
                const MacroMesh m = build_macro_mesh(2, n);
                const TimeGrid g = TimeGrid::from_horizon(0.1, 0.1);
                EffectiveTensors t;
                t.dim = 2;
                t.Ahom_kgt1 = 1.6 * Matrix::Identity(2, 2);
                t.grid = g;
                const TransientField u = solve_macro(
                    {&m, &t, {}, [](const Point& x, double) { return 2 * pi * pi * 1.6 * sinprod(x, 2); }, g, Regime::KGreaterThan1});
                e.push_back(l2_norm(m.mesh, u.values.back() - interpolate(m.mesh, [](const Point& x) { return sinprod(x, 2); })));
            }
            ratios(r, "elliptic k>1 h errors", e[0], e[1], e[2]);
        }
        // Micro and membrane steppers in dt, L2 differences at the final time.
        {
            const auto cell = build_unit_cell(disk(0.04));
            const MicroMesh mm = tile_micro_domain(cell.first, 0.25);
            auto u0 = [](const Point& x) { return sinprod(x, 2); };
            std::vector<Vector> ends;
            for (double dt : {0.02, 0.01, 0.005, 0.0025})
                ends.push_back(solve_micro({&mm, base, 1.0, u0, {}, TimeGrid::from_horizon(0.2, dt)}).values.back());
            ratios(r, "micro k=1 dt differences", l2_norm(mm.mesh, ends[0] - ends[1]), l2_norm(mm.mesh, ends[1] - ends[2]),
                   l2_norm(mm.mesh, ends[2] - ends[3]));
            const MembraneMesh mc = build_membrane_cell(disk(0.04), 0.1);
            const MicroMesh mb = tile_micro_domain(mc.mesh, 0.5, {false});
            ends.clear();
            for (double dt : {0.02, 0.01, 0.005, 0.0025})
                ends.push_back(solve_membrane({&mb, base, 0.1, u0, {}, TimeGrid::from_horizon(0.2, dt)}).values.back());
            ratios(r, "membrane dt differences", l2_norm(mb.mesh, ends[0] - ends[1]), l2_norm(mb.mesh, ends[1] - ends[2]),
                   l2_norm(mb.mesh, ends[2] - ends[3]));
        }
        // Cell problem in h: lambda0 I + A0 on the disk.
        {
            std::vector<Matrix> A;
            for (double h : {0.08, 0.04, 0.02, 0.01}) {
                const auto cell = build_unit_cell(disk(h));
                const CellSystem sys(cell.first, cell.second, base);
                const Chi0Result chi0 = solve_chi0(sys);
                const auto v = solve_v_init(sys, chi0);
                std::vector<Evolution> chi1;
                for (const Vector& vj : v) chi1.push_back(evolve_surface_coupled(sys, vj, TimeGrid{0.01, 0}));
                const A0Result a = compute_A0(sys, chi0, chi1);
                A.push_back(a.volume + a.lambda0 * Matrix::Identity(2, 2));
            }
            ratios(r, "disk lambda0 I + A0 h differences", max_abs(A[0] - A[1]), max_abs(A[1] - A[2]), max_abs(A[2] - A[3]));
        }
    }
};

}  // namespace

std::vector<CriterionResult> run_acceptance(std::ostream* progress) { return Suite(progress).run(); }

void write_acceptance_report(std::ostream& os, const std::vector<CriterionResult>& results) {
    int failed = 0;
    for (const auto& r : results) {
        os << "criterion " << r.id << ": " << (r.pass ? "PASS" : "FAIL") << "  " << r.title << '\n';
        for (const auto& d : r.details) os << "    " << d << '\n';
        failed += r.pass ? 0 : 1;
    }
    os << "summary: " << results.size() - failed << " passed, " << failed << " failed\n";
}

}  // namespace bh
