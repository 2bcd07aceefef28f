#include "bh/micro_solver.hpp"

#include "bh/error.hpp"
#include "bh/union_find.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace bh {

std::vector<double> MicroDiagnostics::lyapunov() const {
    std::vector<double> L(bulk.size(), 0.0);
    for (std::size_t n = 0; n < L.size(); ++n) {
        L[n] = bulk[n];
        if (n < surface.size()) L[n] += surface[n];
    }
    return L;
}

namespace {

void check_grid(const TimeGrid& g) {
    if (!(g.dt > 0.0) || g.steps < 0) throw Error(ErrorCode::ConfigInvalid, "bad time grid");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector interpolate_scaled(const CellMesh& mesh, const SpaceFunction& g, double scale, const std::vector<char>& dir) {
    Vector u = interpolate(mesh, g) * scale;
    for (Eigen::Index v = 0; v < u.size(); ++v)
        if (dir[v]) u[v] = 0.0;
    return u;
}

Vector load_at(const SparseMatrix& M, const CellMesh& mesh, const SpaceTimeFunction& f, double t) {
    if (!f) return Vector::Zero(M.rows());
    return M * interpolate(mesh, [&](const Point& x) { return f(x, t); });
}

// Implicit Euler for K u + (1/Δt) D (u − u_prev) = b with a prepared solver for K + D/Δt.
std::vector<Vector> march(const ConstrainedSolver& step, const SparseMatrix& D, const Vector& u0, const TimeGrid& grid,
                          const std::function<Vector(int)>& load) {
    std::vector<Vector> out;
    out.reserve(grid.steps + 1);
    out.push_back(u0);
    for (int n = 1; n <= grid.steps; ++n) {
        Vector rhs = D * out.back() / grid.dt;
        if (load) rhs += load(n);
        try {
            out.push_back(step.solve(rhs));
        } catch (const Error& e) {
            throw Error(ErrorCode::SolverFailure, std::string("micro step failed: ") + e.what());
        }
    }
    return out;
}

}  // namespace

TransientField solve_micro(const MicroRun& run, MicroDiagnostics* diag) {
    if (!run.mesh) throw Error(ErrorCode::ConfigInvalid, "micro run needs a mesh");
    check_grid(run.grid);
    const MicroMesh& mm = *run.mesh;
    const CellMesh& mesh = mm.mesh;
    const DofMap dofs = DofMap::with_dirichlet(mesh, mm.on_boundary);
    const double eps = mm.eps;
    const double w = std::pow(eps, run.k) * run.coeffs.alpha;

    const SparseMatrix K = assemble_bulk_stiffness(mesh, dofs, run.coeffs.phases()).matrix;
    const SparseMatrix S1 = assemble_surface_stiffness(mesh, mm.surface, dofs, 1.0).matrix;
    const SparseMatrix M = assemble_bulk_mass(mesh, dofs).matrix;
    const SparseMatrix D = w * S1;

    // Initial state: Γ trace of ε^{(1−k)/2}ū₀ up to one constant per component, elliptic elsewhere.
    const double scale = std::pow(eps, 0.5 * (1.0 - run.k));
    ExtensionProblem ext;
    ext.K = &K;
    ext.groups = surface_component_dofs(mm.surface, dofs);
    ext.prescribed = interpolate_scaled(mesh, run.u0, scale, dofs.dirichlet);
    ext.load = load_at(M, mesh, run.f, 0.0);
    ext.dirichlet = dofs.dirichlet;
    const Vector u0 = constrained_extension(ext).u;

    const ConstrainedSolver step(SparseMatrix(K + D / run.grid.dt), dofs.dirichlet, {});
    TransientField out;
    out.grid = run.grid;
    out.values = march(step, D, u0, run.grid, run.f ? std::function<Vector(int)>([&](int n) {
        return load_at(M, mesh, run.f, run.grid.time(n));
    })
                                                    : std::function<Vector(int)>());
    if (diag) {
        const SparseMatrix K1 = assemble_bulk_stiffness(mesh, dofs, {1.0, 1.0, 0.0}).matrix;
        *diag = {};
        double smax = 0.0;
        for (std::size_t n = 0; n < out.values.size(); ++n) {
            const Vector& u = out.values[n];
            diag->bulk.push_back(u.dot(K * u));
            const double s = u.dot(S1 * u);
            diag->surface.push_back(w * s);
            smax = std::max(smax, s);
            if (n > 0) diag->energy_bulk += run.grid.dt * u.dot(K1 * u);
        }
        diag->energy_surface = std::pow(eps, run.k) * smax;
    }
    return out;
}

std::vector<Vector> solve_micro_periodic(const CellMesh& mesh, const SurfaceMesh& surf, const Coefficients& coeffs,
                                         const Vector& init_surface, const TimeGrid& grid) {
    check_grid(grid);
    const DofMap dofs = DofMap::periodic(mesh);
    const SparseMatrix K = assemble_bulk_stiffness(mesh, dofs, coeffs.phases()).matrix;
    const SparseMatrix D = assemble_surface_stiffness(mesh, surf, dofs, coeffs.alpha).matrix;
    const Vector vw = volume_weights(mesh, dofs);

    ExtensionProblem ext;
    ext.K = &K;
    ext.groups = surface_component_dofs(surf, dofs);
    ext.prescribed = init_surface;
    ext.mean_weights = vw;
    const Vector u0 = constrained_extension(ext).u;

    GaugeGroup mean;
    for (int d = 0; d < dofs.n_dofs; ++d) {
        mean.dofs.push_back(d);
        mean.weights.push_back(vw[d]);
    }
    const ConstrainedSolver step(SparseMatrix(K + D / grid.dt), {}, {mean});
    return march(step, D, u0, grid, {});
}

TransientField solve_membrane(const MembraneRun& run, MicroDiagnostics* diag) {
    if (!run.mesh) throw Error(ErrorCode::ConfigInvalid, "membrane run needs a mesh");
    if (!(run.eta > 0.0)) throw Error(ErrorCode::ConfigInvalid, "eta must be positive");
    check_grid(run.grid);
    const MicroMesh& mm = *run.mesh;
    const CellMesh& mesh = mm.mesh;
    const DofMap dofs = DofMap::with_dirichlet(mesh, mm.on_boundary);
    const double lt = run.coeffs.alpha / run.eta;

    if (!(run.coeffs.lambda_int > 0.0) || !(run.coeffs.lambda_out > 0.0))
        throw Error(ErrorCode::NonpositiveCoefficient, "lambda_int and lambda_out must be positive");
    const SparseMatrix K = assemble_weighted_stiffness(mesh, dofs, {run.coeffs.lambda_int, run.coeffs.lambda_out, 0.0});
    const SparseMatrix Kt = assemble_weighted_stiffness(mesh, dofs, {0.0, 0.0, lt});
    const SparseMatrix M = assemble_bulk_mass(mesh, dofs).matrix;

    // Membrane vertices, grouped by connectivity through membrane elements.
    const int nv = static_cast<int>(mesh.vertices.size());
    UnionFind uf(nv);
    std::vector<char> in_mem(nv, 0);
    for (const auto& el : mesh.elements)
        if (el.phase == Phase::Membrane)
            for (int k = 0; k <= mesh.dim; ++k) {
                in_mem[el.v[k]] = 1;
                uf.unite(el.v[0], el.v[k]);
            }
    std::vector<int> group_of(nv, -1);
    ExtensionProblem ext;
    for (int v = 0; v < nv; ++v) {
        if (!in_mem[v]) continue;
        const int r = uf.find(v);
        if (group_of[r] < 0) {
            group_of[r] = static_cast<int>(ext.groups.size());
            ext.groups.emplace_back();
        }
        ext.groups[group_of[r]].push_back(dofs.vertex_dof[v]);
    }
    ext.K = &K;
    ext.prescribed = interpolate_scaled(mesh, run.u0, 1.0, dofs.dirichlet);
    ext.load = load_at(M, mesh, run.f, 0.0);
    ext.dirichlet = dofs.dirichlet;
    const Vector u0 = constrained_extension(ext).u;

    const ConstrainedSolver step(SparseMatrix(K + Kt / run.grid.dt), dofs.dirichlet, {});
    TransientField out;
    out.grid = run.grid;
    out.values = march(step, Kt, u0, run.grid, run.f ? std::function<Vector(int)>([&](int n) {
        return load_at(M, mesh, run.f, run.grid.time(n));
    })
                                                    : std::function<Vector(int)>());
    if (diag) {
        const SparseMatrix K1 = assemble_weighted_stiffness(mesh, dofs, {1.0, 1.0, 0.0});
        *diag = {};
        for (std::size_t n = 0; n < out.values.size(); ++n) {
            const Vector& u = out.values[n];
            diag->bulk.push_back(u.dot(K * u));
            const double m = u.dot(Kt * u);
            diag->surface.push_back(m);
            diag->membrane.push_back(m / run.coeffs.alpha);
            diag->energy_surface = std::max(diag->energy_surface, mm.eps * m / run.coeffs.alpha);
            if (n > 0) diag->energy_bulk += run.grid.dt * u.dot(K1 * u);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------
// Averages and cross-mesh norms

std::vector<Vector> local_average(const MicroMesh& mm, const TransientField& u) {
    const CellMesh& mesh = mm.mesh;
    const int n = mm.cells_per_side;
    const int ncells = mesh.dim == 2 ? n * n : n * n * n;
    const double cell_vol = std::pow(mm.eps, mesh.dim);
    std::vector<double> vol(mesh.elements.size());
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) vol[e] = std::abs(simplex_volume(mesh, static_cast<int>(e)));
    std::vector<Vector> out;
    for (const auto& v : u.values) {
        Vector a = Vector::Zero(ncells);
        for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
            double s = 0.0;
            for (int k = 0; k <= mesh.dim; ++k) s += v[mesh.elements[e].v[k]];
            a[mm.element_cell[e]] += vol[e] * s / (mesh.dim + 1);
        }
        out.push_back(a / cell_vol);
    }
    return out;
}

namespace {

int cell_of(const Point& x, int n, int dim) {
    int c[3] = {0, 0, 0};
    for (int d = 0; d < dim; ++d) c[d] = std::clamp(static_cast<int>(std::floor(x[d] * n)), 0, n - 1);
    return dim == 2 ? c[0] + n * c[1] : c[0] + n * (c[1] + n * c[2]);
}

// ∫_T (c − u)² for P1 u with vertex values uv.
double element_sq(double vol, int dim, const double* uv, double c) {
    double s = 0.0, s2 = 0.0;
    for (int k = 0; k <= dim; ++k) {
        s += uv[k];
        s2 += uv[k] * uv[k];
    }
    const double mean = s / (dim + 1);
    const double q = (s * s + s2) / ((dim + 1) * (dim + 2));
    return vol * (c * c - 2.0 * c * mean + q);
}

}  // namespace

double average_error(const MicroMesh& micro, const std::vector<Vector>& averages, const MacroMesh& macro,
                     const TransientField& u) {
    const int n = micro.cells_per_side;
    if (macro.n % n != 0) throw Error(ErrorCode::ConfigInvalid, "macro mesh is not aligned with the cells");
    if (averages.size() != u.values.size()) throw Error(ErrorCode::ConfigInvalid, "time levels differ");
    const CellMesh& m = macro.mesh;
    std::vector<int> cell(m.elements.size());
    std::vector<double> vol(m.elements.size());
    for (std::size_t e = 0; e < m.elements.size(); ++e) {
        cell[e] = cell_of(element_centroid(m, static_cast<int>(e)), n, m.dim);
        vol[e] = std::abs(simplex_volume(m, static_cast<int>(e)));
    }
    double total = 0.0;
    for (std::size_t l = 1; l < u.values.size(); ++l) {
        double s = 0.0;
        for (std::size_t e = 0; e < m.elements.size(); ++e) {
            double uv[4];
            for (int k = 0; k <= m.dim; ++k) uv[k] = u.values[l][m.elements[e].v[k]];
            s += element_sq(vol[e], m.dim, uv, averages[l][cell[e]]);
        }
        total += u.grid.dt * s;
    }
    return std::sqrt(std::max(0.0, total));
}

double average_norm(const MicroMesh& micro, const Vector& averages) {
    return std::sqrt(averages.squaredNorm() * std::pow(micro.eps, micro.mesh.dim));
}

PointLocator::PointLocator(const CellMesh& mesh) : mesh_(&mesh) {
    const double ne = static_cast<double>(mesh.elements.size());
    nb_ = std::max(1, static_cast<int>(mesh.dim == 2 ? std::sqrt(ne / 4.0) : std::cbrt(ne / 8.0)));
    const int nbins = mesh.dim == 2 ? nb_ * nb_ : nb_ * nb_ * nb_;
    bins_.resize(nbins);
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
        for (int d = 0; d < mesh.dim; ++d) {
            double a = 1e300, b = -1e300;
            for (int k = 0; k <= mesh.dim; ++k) {
                a = std::min(a, mesh.vertices[mesh.elements[e].v[k]][d]);
                b = std::max(b, mesh.vertices[mesh.elements[e].v[k]][d]);
            }
            lo[d] = bin_of(a - 1e-12);
            hi[d] = bin_of(b + 1e-12);
        }
        for (int k = lo[2]; k <= hi[2]; ++k)
            for (int j = lo[1]; j <= hi[1]; ++j)
                for (int i = lo[0]; i <= hi[0]; ++i) bins_[i + nb_ * (j + nb_ * k)].push_back(static_cast<int>(e));
    }
}

int PointLocator::bin_of(double c) const { return std::clamp(static_cast<int>(std::floor(c * nb_)), 0, nb_ - 1); }

bool PointLocator::barycentric(int e, const Point& x, std::array<double, 4>& b) const {
    const CellMesh& m = *mesh_;
    const auto& v = m.elements[e].v;
    const Point& x0 = m.vertices[v[0]];
    if (m.dim == 2) {
        Eigen::Matrix2d J;
        J.col(0) = (m.vertices[v[1]] - x0).head<2>();
        J.col(1) = (m.vertices[v[2]] - x0).head<2>();
        const Eigen::Vector2d l = J.inverse() * (x - x0).head<2>();
        b = {1.0 - l[0] - l[1], l[0], l[1], 0.0};
    } else {
        Eigen::Matrix3d J;
        for (int k = 0; k < 3; ++k) J.col(k) = m.vertices[v[k + 1]] - x0;
        const Eigen::Vector3d l = J.inverse() * (x - x0);
        b = {1.0 - l.sum(), l[0], l[1], l[2]};
    }
    double mn = 1e300;
    for (int k = 0; k <= m.dim; ++k) mn = std::min(mn, b[k]);
    return mn >= -1e-10;
}

int PointLocator::locate(const Point& x, std::array<double, 4>& bary) const {
    const int i = bin_of(x[0]), j = bin_of(x[1]), k = mesh_->dim == 3 ? bin_of(x[2]) : 0;
    for (int e : bins_[i + nb_ * (j + nb_ * k)])
        if (barycentric(e, x, bary)) return e;
    throw Error(ErrorCode::MeshFailure, "point outside the mesh");
}

double PointLocator::evaluate(const Vector& u, const Point& x) const {
    std::array<double, 4> b{};
    const int e = locate(x, b);
    double s = 0.0;
    for (int k = 0; k <= mesh_->dim; ++k) s += b[k] * u[mesh_->elements[e].v[k]];
    return s;
}

double l2_time_difference(const CellMesh& a, const TransientField& ua, const CellMesh& b, const TransientField& ub) {
    if (a.dim != b.dim || ua.values.size() != ub.values.size())
        throw Error(ErrorCode::ConfigInvalid, "fields are not comparable");
    // Degree-4 rule on triangles, degree-2 on tetrahedra.
    std::vector<std::array<double, 4>> pts;
    std::vector<double> wts;
    if (a.dim == 2) {
        const double a1 = 0.445948490915965, w1 = 0.223381589678011;
        const double a2 = 0.091576213509771, w2 = 0.109951743655322;
        for (auto [p, w] : {std::pair{a1, w1}, std::pair{a2, w2}}) {
            const double q = 1.0 - 2.0 * p;
            pts.push_back({p, p, q, 0});
            pts.push_back({p, q, p, 0});
            pts.push_back({q, p, p, 0});
            for (int r = 0; r < 3; ++r) wts.push_back(w);
        }
    } else {
        const double p = 0.1381966011250105, q = 0.5854101966249685;
        pts = {{q, p, p, p}, {p, q, p, p}, {p, p, q, p}, {p, p, p, q}};
        wts = {0.25, 0.25, 0.25, 0.25};
    }
    const PointLocator loc(b);
    struct Sample {
        double w;
        std::array<int, 4> va, vb;
        std::array<double, 4> ba, bb;
    };
    std::vector<Sample> samples;
    for (std::size_t e = 0; e < a.elements.size(); ++e) {
        const double vol = std::abs(simplex_volume(a, static_cast<int>(e)));
        const auto& v = a.elements[e].v;
        for (std::size_t q = 0; q < pts.size(); ++q) {
            Point x = Point::Zero();
            for (int k = 0; k <= a.dim; ++k) x += pts[q][k] * a.vertices[v[k]];
            Sample s{vol * wts[q], v, {}, pts[q], {}};
            const int eb = loc.locate(x, s.bb);
            s.vb = b.elements[eb].v;
            samples.push_back(s);
        }
    }
    double total = 0.0;
    for (std::size_t n = 1; n < ua.values.size(); ++n) {
        double sum = 0.0;
        for (const auto& s : samples) {
            double d = 0.0;
            for (int k = 0; k <= a.dim; ++k) d += s.ba[k] * ua.values[n][s.va[k]] - s.bb[k] * ub.values[n][s.vb[k]];
            sum += s.w * d * d;
        }
        total += ua.grid.dt * sum;
    }
    return std::sqrt(total);
}

// ---------------------------------------------------------------------------------------
// Studies

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return v.size() >= 2;
}

StudyReport convergence_study(const StudyConfig& cfg) {
    StudyReport r;
    r.param_name = "eps";
    const auto cell = build_unit_cell(cfg.cell);
    std::vector<double> errs;
    for (double eps : cfg.eps_list) {
        const auto t0 = std::chrono::steady_clock::now();
        const MicroMesh mm = tile_micro_domain(cell.first, eps, cfg.tile);
        MicroDiagnostics diag;
        const TransientField u = solve_micro({&mm, cfg.coeffs, cfg.k, cfg.u0, cfg.f, cfg.grid}, &diag);
        StudyRow row;
        row.param = mm.eps;
        if (cfg.reference && cfg.macro) row.error = average_error(mm, local_average(mm, u), *cfg.macro, *cfg.reference);
        else row.error = l2_norm_time(mm.mesh, u);
        row.energy_bulk = diag.energy_bulk;
        row.energy_surface = diag.energy_surface;
        row.runtime_s = seconds_since(t0);
        errs.push_back(row.error);
        r.rows.push_back(row);
    }
    r.monotone_decrease = strictly_decreasing(errs);
    return r;
}

StudyReport concentration_study(const ConcentrationConfig& cfg) {
    StudyReport r;
    r.param_name = "eta";
    const auto cell = build_unit_cell(cfg.cell);
    const MicroMesh ref_mesh = tile_micro_domain(cell.first, cfg.eps, cfg.tile);
    const TransientField ref = solve_micro({&ref_mesh, cfg.coeffs, 1.0, cfg.u0, cfg.f, cfg.grid});
    std::vector<double> errs;
    for (double eta : cfg.eta_list) {
        const auto t0 = std::chrono::steady_clock::now();
        const MembraneMesh cellm = build_membrane_cell(cfg.cell, eta);
        const MicroMesh mm = tile_micro_domain(cellm.mesh, cfg.eps, cfg.tile);
        MicroDiagnostics diag;
        const TransientField u = solve_membrane({&mm, cfg.coeffs, eta, cfg.u0, cfg.f, cfg.grid}, &diag);
        StudyRow row;
        row.param = eta;
        row.error = l2_time_difference(mm.mesh, u, ref_mesh.mesh, ref);
        row.energy_bulk = diag.energy_bulk;
        row.energy_surface = diag.energy_surface;
        row.runtime_s = seconds_since(t0);
        errs.push_back(row.error);
        r.rows.push_back(row);
    }
    r.monotone_decrease = strictly_decreasing(errs);
    return r;
}

void write_study_csv(std::ostream& os, const StudyReport& r) {
    auto num = [](double x) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return std::string(buf);
    };
    os << r.param_name << ", error_L2, energy_bulk, energy_surface, runtime_s\n";
    for (const auto& row : r.rows)
        os << num(row.param) << ", " << num(row.error) << ", " << num(row.energy_bulk) << ", "
           << num(row.energy_surface) << ", " << num(row.runtime_s) << '\n';
    os << "monotone_decrease: " << (r.monotone_decrease ? "true" : "false") << '\n';
}

}  // namespace bh
