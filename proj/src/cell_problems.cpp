#include "bh/cell_problems.hpp"

#include "bh/error.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace bh {

TimeGrid TimeGrid::from_horizon(double horizon, double dt) {
    if (!(dt > 0.0) || !(horizon > 0.0)) throw Error(ErrorCode::ConfigInvalid, "time grid needs positive horizon and step");
    const double r = horizon / dt;
    const long steps = std::lround(r);
    if (std::abs(r - steps) > 1e-9 * std::max(1.0, r))
        throw Error(ErrorCode::ConfigInvalid, "time horizon is not a multiple of the step");
    return {dt, static_cast<int>(steps)};
}

Vector Evolution::rate(int n) const {
    if (n == 0) return Xdot0;
    return (X[n] - X[n - 1]) / grid.dt;
}

CellSystem::CellSystem(const CellMesh& mesh, const SurfaceMesh& surf, const Coefficients& coeffs)
    : mesh_(&mesh), surf_(&surf), coeffs_(coeffs), dofs_(DofMap::periodic(mesh)) {
    if (!(coeffs.alpha > 0.0)) throw Error(ErrorCode::NonpositiveCoefficient, "alpha must be positive");
    K_ = assemble_bulk_stiffness(mesh, dofs_, coeffs.phases()).matrix;
    S_ = assemble_surface_stiffness(mesh, surf, dofs_, coeffs.alpha).matrix;
    vol_w_ = bh::volume_weights(mesh, dofs_);
    surf_w_ = bh::surface_weights(mesh, surf, dofs_);
    comps_ = surface_component_dofs(surf, dofs_);

    std::vector<int> compact(dofs_.n_dofs, -1);
    for (const auto& c : comps_)
        for (int d : c) {
            compact[d] = static_cast<int>(gamma_dofs_.size());
            gamma_dofs_.push_back(d);
        }
    if (gamma_dofs_.empty()) return;
    std::vector<GaugeGroup> gauges;
    for (const auto& c : comps_) {
        GaugeGroup g;
        for (int d : c) {
            g.dofs.push_back(compact[d]);
            g.weights.push_back(surf_w_[d]);
        }
        gauges.push_back(std::move(g));
    }
    surface_solver_ = std::make_unique<ConstrainedSolver>(restrict_matrix(S_, gamma_dofs_), std::vector<char>{},
                                                          std::move(gauges));
}

CellSystem::~CellSystem() = default;

Vector CellSystem::bulk_load(int j) const {
    Point e = Point::Zero();
    e[j] = 1.0;
    return assemble_gradient_load(*mesh_, dofs_, coeffs_.phases(), e);
}

Vector CellSystem::surface_load(int j) const {
    Point e = Point::Zero();
    e[j] = 1.0;
    return assemble_surface_gradient_load(*mesh_, *surf_, dofs_, coeffs_.alpha, e);
}

Vector CellSystem::surface_solve(const Vector& rhs, std::vector<double>* defect) const {
    Vector x = Vector::Zero(dofs_.n_dofs);
    if (!surface_solver_) return x;
    Vector r(static_cast<Eigen::Index>(gamma_dofs_.size()));
    for (std::size_t k = 0; k < gamma_dofs_.size(); ++k) r[k] = rhs[gamma_dofs_[k]];
    const Vector z = surface_solver_->solve(r);
    for (std::size_t k = 0; k < gamma_dofs_.size(); ++k) x[gamma_dofs_[k]] = z[k];
    if (defect) {
        defect->clear();
        const auto& mu = surface_solver_->last_multipliers();
        for (std::size_t i = 0; i < comps_.size(); ++i) {
            double w = 0.0;
            for (int d : comps_[i]) w += surf_w_[d];
            defect->push_back(mu[i] * w);
        }
    }
    return x;
}

Vector CellSystem::harmonic_extension(const Vector& trace, const Vector& load, std::vector<double>* constants) const {
    ExtensionProblem p;
    p.K = &K_;
    p.groups = comps_;
    p.prescribed = trace;
    p.load = load;
    p.mean_weights = vol_w_;
    ExtensionResult r = constrained_extension(p);
    if (constants) *constants = r.constants;
    return r.u;
}

GaugeGroup CellSystem::mean_gauge() const {
    GaugeGroup g;
    for (int d = 0; d < dofs_.n_dofs; ++d) {
        g.dofs.push_back(d);
        g.weights.push_back(vol_w_[d]);
    }
    return g;
}

Chi0Result solve_chi0(const CellSystem& sys) {
    Chi0Result res;
    const int N = sys.dim();
    for (int j = 0; j < N; ++j) {
        // Surface problem: s(χ₀^j, ψ) = −α∫_Γ ∇^B y_j·∇^B ψ, fixed up to a constant per component.
        const Vector g = sys.surface_load(j);
        std::vector<double> defect;
        const Vector trace = sys.surface_solve(-g, &defect);
        double scale = g.cwiseAbs().sum();
        for (std::size_t i = 0; i < defect.size(); ++i)
            if (std::abs(defect[i]) > 1e-10 * std::max(scale, 1e-300))
                throw Error(ErrorCode::ComponentSingular, "surface corrector problem is incompatible on a component");
        // Bulk problem with the traces, constants fixed by the per-component flux balance,
        // then the global mean shift.
        std::vector<double> constants;
        res.chi0.push_back(sys.harmonic_extension(trace, -sys.bulk_load(j), &constants));
        res.constants.push_back(constants);
    }
    return res;
}

Vector flux_functional(const CellSystem& sys, const Vector& chi0_j, int j) {
    const Vector r = -(sys.K() * chi0_j + sys.bulk_load(j));
    Vector J = Vector::Zero(r.size());
    for (const auto& c : sys.components())
        for (int d : c) J[d] = r[d];
    return J;
}

std::vector<Vector> solve_v_init(const CellSystem& sys, const Chi0Result& chi0) {
    std::vector<Vector> v;
    for (int j = 0; j < sys.dim(); ++j) {
        const Vector J = flux_functional(sys, chi0.chi0[j], j);
        for (std::size_t i = 0; i < sys.components().size(); ++i) {
            double total = 0.0, meas = 0.0;
            for (int d : sys.components()[i]) {
                total += J[d];
                meas += sys.surface_weights()[d];
            }
            if (std::abs(total) > 1e-8 * meas)
                throw Error(ErrorCode::CompatibilityViolated, "flux jump has non-zero integral over a component");
        }
        v.push_back(sys.surface_solve(J));
    }
    return v;
}

Evolution evolve_surface_coupled(const CellSystem& sys, const Vector& init_surface, const TimeGrid& grid) {
    Evolution ev;
    ev.grid = grid;
    ev.X.reserve(grid.steps + 1);
    ev.X.push_back(sys.harmonic_extension(init_surface));
    ev.Xdot0 = sys.surface_solve(-(sys.K() * ev.X[0]));

    const SparseMatrix A = SparseMatrix(sys.K() + sys.S() / grid.dt);
    ConstrainedSolver step(A, {}, {sys.mean_gauge()});
    for (int n = 1; n <= grid.steps; ++n) {
        try {
            ev.X.push_back(step.solve(sys.S() * ev.X.back() / grid.dt));
        } catch (const Error& e) {
            throw Error(ErrorCode::SolverFailure, std::string("cell evolution step failed: ") + e.what());
        }
    }
    return ev;
}

CellFunctionSet compute_cell_functions(const CellSystem& sys, const TimeGrid& grid) {
    CellFunctionSet set;
    set.grid = grid;
    set.chi0 = solve_chi0(sys);
    set.v = solve_v_init(sys, set.chi0);
    for (int j = 0; j < sys.dim(); ++j) {
        set.chi1.push_back(evolve_surface_coupled(sys, set.v[j], grid));
        set.omega.push_back(evolve_surface_coupled(sys, -set.chi0.chi0[j], grid));
    }
    return set;
}

Vector factor_W(const std::vector<Evolution>& omega, int n, const Point& grad_u0) {
    Vector w = Vector::Zero(omega.front().X[n].size());
    for (std::size_t j = 0; j < omega.size(); ++j) w += grad_u0[static_cast<int>(j)] * omega[j].X[n];
    return w;
}

std::vector<Vector> solve_chi0_tilde(const CellSystem& sys) {
    ConstrainedSolver solver(sys.K(), {}, {sys.mean_gauge()});
    std::vector<Vector> out;
    for (int j = 0; j < sys.dim(); ++j) {
        try {
            out.push_back(solver.solve(-sys.bulk_load(j)));
        } catch (const Error& e) {
            throw Error(ErrorCode::SolverFailure, e.what());
        }
    }
    return out;
}

double surface_energy(const CellSystem& sys, const Vector& X) { return X.dot(sys.S() * X) / sys.coeffs().alpha; }

std::vector<double> outer_flux_integrals(const CellSystem& sys, const Vector& u) {
    const SparseMatrix Kout = assemble_weighted_stiffness(sys.mesh(), sys.dofs(), {0.0, 1.0, 0.0});
    const Vector r = Kout * u;
    std::vector<double> out;
    for (const auto& c : sys.components()) {
        double s = 0.0;
        for (int d : c) s -= r[d];
        out.push_back(s);
    }
    return out;
}

namespace {

void put_field(std::ostream& os, const std::string& name, int index, const Vector& v) {
    os << "field " << name << ' ' << index << ' ' << v.size() << '\n';
    char buf[40];
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", v[k]);
        os << buf << '\n';
    }
}

}  // namespace

void write_cell_archive(std::ostream& os, const CellFunctionSet& set, const std::string& provenance) {
    const int N = static_cast<int>(set.chi0.chi0.size());
    char buf[64];
    os << "BHCELL 1\n";
    os << "# " << provenance << '\n';
    std::snprintf(buf, sizeof buf, "%.17g", set.grid.dt);
    os << "grid " << buf << ' ' << set.grid.steps << '\n';
    os << "dim " << N << '\n';
    os << "constants";
    for (const auto& cj : set.chi0.constants) {
        os << ' ' << cj.size();
        for (double c : cj) {
            std::snprintf(buf, sizeof buf, "%.17g", c);
            os << ' ' << buf;
        }
    }
    os << '\n';
    for (int j = 0; j < N; ++j) put_field(os, "chi0_" + std::to_string(j + 1), 0, set.chi0.chi0[j]);
    for (int j = 0; j < N; ++j) put_field(os, "v_" + std::to_string(j + 1), 0, set.v[j]);
    for (int j = 0; j < N; ++j) {
        put_field(os, "chi1dot0_" + std::to_string(j + 1), 0, set.chi1[j].Xdot0);
        for (std::size_t n = 0; n < set.chi1[j].X.size(); ++n)
            put_field(os, "chi1_" + std::to_string(j + 1), static_cast<int>(n), set.chi1[j].X[n]);
    }
    for (int j = 0; j < N; ++j) {
        put_field(os, "omegadot0_" + std::to_string(j + 1), 0, set.omega[j].Xdot0);
        for (std::size_t n = 0; n < set.omega[j].X.size(); ++n)
            put_field(os, "omega_" + std::to_string(j + 1), static_cast<int>(n), set.omega[j].X[n]);
    }
    os << "end\n";
}

CellFunctionSet read_cell_archive(std::istream& is) {
    auto fail = [](const std::string& m) { return Error(ErrorCode::FormatError, "BHCELL: " + m); };
    std::string line, tok;
    if (!std::getline(is, line) || line != "BHCELL 1") throw fail("bad header");
    CellFunctionSet set;
    int N = 0;
    auto num = [&](std::istream& in) {
        std::string t;
        if (!(in >> t)) throw fail("truncated number");
        char* end = nullptr;
        const double x = std::strtod(t.c_str(), &end);
        if (*end != '\0') throw fail("bad number '" + t + "'");
        return x;
    };
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        ls >> tok;
        if (tok == "end") break;
        if (tok == "grid") {
            set.grid.dt = num(ls);
            ls >> set.grid.steps;
        } else if (tok == "dim") {
            ls >> N;
            set.chi0.chi0.resize(N);
            set.chi0.constants.resize(N);
            set.v.resize(N);
            set.chi1.resize(N);
            set.omega.resize(N);
            for (int j = 0; j < N; ++j) {
                set.chi1[j].grid = set.grid;
                set.omega[j].grid = set.grid;
            }
        } else if (tok == "constants") {
            for (int j = 0; j < N; ++j) {
                std::size_t m = 0;
                ls >> m;
                for (std::size_t i = 0; i < m; ++i) set.chi0.constants[j].push_back(num(ls));
            }
        } else if (tok == "field") {
            std::string name;
            int index = 0;
            long size = 0;
            ls >> name >> index >> size;
            if (!ls || size < 0) throw fail("bad field header");
            Vector v(size);
            for (long k = 0; k < size; ++k) v[k] = num(is);
            std::getline(is, line);
            const auto us = name.rfind('_');
            if (us == std::string::npos) throw fail("bad field name");
            const std::string base = name.substr(0, us);
            const int j = std::stoi(name.substr(us + 1)) - 1;
            if (j < 0 || j >= N) throw fail("field component out of range");
            if (base == "chi0") set.chi0.chi0[j] = v;
            else if (base == "v") set.v[j] = v;
            else if (base == "chi1dot0") set.chi1[j].Xdot0 = v;
            else if (base == "omegadot0") set.omega[j].Xdot0 = v;
            else if (base == "chi1") {
                if (index != static_cast<int>(set.chi1[j].X.size())) throw fail("chi1 snapshots out of order");
                set.chi1[j].X.push_back(v);
            } else if (base == "omega") {
                if (index != static_cast<int>(set.omega[j].X.size())) throw fail("omega snapshots out of order");
                set.omega[j].X.push_back(v);
            } else {
                throw fail("unknown field '" + name + "'");
            }
        } else {
            throw fail("unknown record '" + tok + "'");
        }
    }
    if (tok != "end") throw fail("missing end marker");
    for (int j = 0; j < N; ++j) {
        set.chi1[j].grid = set.grid;
        set.omega[j].grid = set.grid;
        if (static_cast<int>(set.chi1[j].X.size()) != set.grid.steps + 1 ||
            static_cast<int>(set.omega[j].X.size()) != set.grid.steps + 1)
            throw fail("snapshot count does not match the time grid");
    }
    return set;
}

}  // namespace bh
