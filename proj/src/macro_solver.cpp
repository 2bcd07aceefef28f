#include "bh/macro_solver.hpp"

#include "bh/error.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace bh {

MacroMesh build_macro_mesh(int dim, int n) {
    if (n < 1 || (dim != 2 && dim != 3)) throw Error(ErrorCode::ConfigInvalid, "macro mesh needs dim 2 or 3 and n >= 1");
    MacroMesh m;
    m.n = n;
    m.mesh.dim = dim;
    const int s = n + 1;
    const int nz = dim == 3 ? s : 1;
    auto id = [&](int i, int j, int k) { return i + s * (j + s * k); };
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < s; ++j)
            for (int i = 0; i < s; ++i) {
                m.mesh.vertices.emplace_back(static_cast<double>(i) / n, static_cast<double>(j) / n,
                                             dim == 3 ? static_cast<double>(k) / n : 0.0);
                const bool b = i == 0 || i == n || j == 0 || j == n || (dim == 3 && (k == 0 || k == n));
                m.on_boundary.push_back(b ? 1 : 0);
            }
    auto push = [&](std::array<int, 4> v) {
        Element el;
        el.v = v;
        el.phase = Phase::Out;
        m.mesh.elements.push_back(el);
        if (simplex_volume(m.mesh, static_cast<int>(m.mesh.elements.size()) - 1) < 0.0)
            std::swap(m.mesh.elements.back().v[0], m.mesh.elements.back().v[1]);
    };
    if (dim == 2) {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const int a = id(i, j, 0), b = id(i + 1, j, 0), c = id(i + 1, j + 1, 0), d = id(i, j + 1, 0);
                push({a, b, c, 0});
                push({a, c, d, 0});
            }
    } else {
        static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i)
                    for (const auto& p : perms) {
                        std::array<int, 3> c{i, j, k};
                        std::array<int, 4> v{};
                        v[0] = id(c[0], c[1], c[2]);
                        for (int a = 0; a < 3; ++a) {
                            ++c[p[a]];
                            v[a + 1] = id(c[0], c[1], c[2]);
                        }
                        push(v);
                    }
    }
    return m;
}

const char* regime_name(Regime r) {
    switch (r) {
        case Regime::K1ConnectedConnected: return "k1_connected_connected";
        case Regime::K1ConnectedDisconnected: return "k1_connected_disconnected";
        case Regime::KLessThan1: return "klt1";
        case Regime::KGreaterThan1: return "kgt1";
    }
    return "?";
}

Regime parse_regime(const std::string& s) {
    for (Regime r : {Regime::K1ConnectedConnected, Regime::K1ConnectedDisconnected, Regime::KLessThan1,
                     Regime::KGreaterThan1})
        if (s == regime_name(r)) return r;
    throw Error(ErrorCode::ConfigInvalid, "unknown regime '" + s + "'");
}

std::vector<std::vector<SparseMatrix>> directional_stiffness(const CellMesh& mesh, const DofMap& dofs) {
    const int N = mesh.dim;
    std::vector<std::vector<SparseMatrix>> K(N, std::vector<SparseMatrix>(N));
    for (int h = 0; h < N; ++h)
        for (int j = 0; j < N; ++j) {
            Eigen::Matrix3d E = Eigen::Matrix3d::Zero();
            E(h, j) = 1.0;
            K[h][j] = assemble_matrix_stiffness(mesh, dofs, E);
        }
    return K;
}

SparseMatrix flux_stiffness(const std::vector<std::vector<SparseMatrix>>& parts, const Matrix& M) {
    const int N = static_cast<int>(parts.size());
    SparseMatrix K(parts[0][0].rows(), parts[0][0].cols());
    for (int j = 0; j < N; ++j)
        for (int h = 0; h < N; ++h)
            if (M(j, h) != 0.0) K += M(j, h) * parts[h][j];
    return K;
}

Vector interpolate(const CellMesh& mesh, const SpaceFunction& g) {
    Vector u = Vector::Zero(static_cast<Eigen::Index>(mesh.vertices.size()));
    if (!g) return u;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) u[static_cast<Eigen::Index>(v)] = g(mesh.vertices[v]);
    return u;
}

double l2_norm(const CellMesh& mesh, const Vector& u) {
    const SparseMatrix M = assemble_bulk_mass(mesh, DofMap::identity(mesh)).matrix;
    return std::sqrt(std::max(0.0, u.dot(M * u)));
}

double l2_norm_time(const CellMesh& mesh, const TransientField& u) {
    const SparseMatrix M = assemble_bulk_mass(mesh, DofMap::identity(mesh)).matrix;
    double s = 0.0;
    for (std::size_t n = 1; n < u.values.size(); ++n) s += u.grid.dt * u.values[n].dot(M * u.values[n]);
    return std::sqrt(std::max(0.0, s));
}

namespace {

// Homogeneous Dirichlet solve, LDLT when symmetric (with a positive-pivot check), LU otherwise.
class StepSolver {
public:
    StepSolver(const SparseMatrix& A, const std::vector<char>& dirichlet) : n_(static_cast<int>(A.rows())) {
        for (int d = 0; d < n_; ++d)
            if (!dirichlet[d]) free_.push_back(d);
        const SparseMatrix Af = restrict_matrix(A, free_);
        const SparseMatrix At = Af.transpose();
        symmetric_ = (Af - At).norm() <= 1e-13 * std::max(Af.norm(), 1e-300);
        if (symmetric_) {
            ldlt_.compute(Af);
            if (ldlt_.info() != Eigen::Success) throw Error(ErrorCode::SingularStep, "step matrix factorisation failed");
            const Vector D = ldlt_.vectorD();
            if (D.size() && !(D.minCoeff() > 0.0))
                throw Error(ErrorCode::SingularStep, "step matrix is not positive definite");
        } else {
            lu_.analyzePattern(Af);
            lu_.factorize(Af);
            if (lu_.info() != Eigen::Success) throw Error(ErrorCode::SingularStep, "step matrix factorisation failed");
        }
    }

    Vector solve(const Vector& b) const {
        Vector bf(static_cast<Eigen::Index>(free_.size()));
        for (std::size_t k = 0; k < free_.size(); ++k) bf[k] = b[free_[k]];
        const Vector xf = symmetric_ ? Vector(ldlt_.solve(bf)) : Vector(lu_.solve(bf));
        Vector x = Vector::Zero(n_);
        for (std::size_t k = 0; k < free_.size(); ++k) x[free_[k]] = xf[k];
        return x;
    }

private:
    int n_;
    std::vector<int> free_;
    bool symmetric_ = true;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

void check_problem(const MacroProblem& p) {
    if (!p.mesh || !p.tensors) throw Error(ErrorCode::ConfigInvalid, "macro problem needs a mesh and tensors");
    if (p.mesh->mesh.dim != p.tensors->dim)
        throw Error(ErrorCode::ConfigInvalid, "macro mesh and tensors have different dimensions");
}

Vector zero_boundary(Vector u, const std::vector<char>& mask) {
    for (Eigen::Index v = 0; v < u.size(); ++v)
        if (mask[v]) u[v] = 0.0;
    return u;
}

Vector source_load(const SparseMatrix& M, const CellMesh& mesh, const SpaceTimeFunction& f, double t) {
    if (!f) return Vector::Zero(M.rows());
    return M * interpolate(mesh, [&](const Point& x) { return f(x, t); });
}

}  // namespace

TransientField solve_homogenized_memory(const MacroProblem& p) {
    check_problem(p);
    if (p.regime != Regime::K1ConnectedConnected && p.regime != Regime::K1ConnectedDisconnected)
        throw Error(ErrorCode::ConfigInvalid, "memory solver needs a k = 1 regime");
    const EffectiveTensors& T = *p.tensors;
    const CellMesh& mesh = p.mesh->mesh;
    const int N = T.dim;
    const DofMap dofs = DofMap::with_dirichlet(mesh, p.mesh->on_boundary);
    const auto parts = directional_stiffness(mesh, dofs);
    const SparseMatrix M = assemble_bulk_mass(mesh, dofs).matrix;
    const double dt = p.grid.dt;
    const int steps = p.grid.steps;

    const bool connected = p.regime == Regime::K1ConnectedConnected;
    const Matrix C = connected ? T.C0.primary : Matrix::Zero(N, N);
    const SparseMatrix KA = flux_stiffness(parts, T.lambda0_I_plus_A0());
    const SparseMatrix KC = flux_stiffness(parts, C);

    std::vector<Matrix> B(steps + 1);
    for (int k = 0; k <= steps; ++k) B[k] = T.B0_at(p.grid.time(k));

    const Vector u0bar = zero_boundary(interpolate(mesh, p.u0), p.mesh->on_boundary);
    auto F = [&](int n) {
        Vector load = source_load(M, mesh, p.f, p.grid.time(n));
        const Matrix Phi = T.Phi_at(p.grid.time(n));
        for (int j = 0; j < N; ++j)
            for (int h = 0; h < N; ++h)
                if (Phi(j, h) != 0.0) load -= Phi(j, h) * (parts[h][j] * u0bar);
        return load;
    };

    TransientField out;
    out.grid = p.grid;
    out.values.reserve(steps + 1);
    if (connected) {
        out.values.push_back(u0bar);
    } else {
        // No initial condition: the t = 0 equation is elliptic with an empty history.
        StepSolver s0(KA, dofs.dirichlet);
        out.values.push_back(s0.solve(F(0)));
    }
    if (steps == 0) return out;

    SparseMatrix step = SparseMatrix(KC / dt + KA);
    if (B[0].cwiseAbs().maxCoeff() != 0.0) step += (0.5 * dt) * flux_stiffness(parts, B[0]);
    const StepSolver solver(step, dofs.dirichlet);

    const Eigen::Index nd = dofs.n_dofs;
    for (int n = 1; n <= steps; ++n) {
        Vector rhs = F(n);
        if (connected) rhs += KC * out.values[n - 1] / dt;
        // Trapezoidal convolution: weight Δt/2 at m = 0, Δt for 0 < m < n; m = n sits in the step matrix.
        for (int j = 0; j < N; ++j)
            for (int h = 0; h < N; ++h) {
                Vector z = Vector::Zero(nd);
                bool any = false;
                for (int m = 0; m < n; ++m) {
                    const double b = B[n - m](j, h);
                    if (b == 0.0) continue;
                    z += (m == 0 ? 0.5 * dt : dt) * b * out.values[m];
                    any = true;
                }
                if (any) rhs -= parts[h][j] * z;
            }
        out.values.push_back(solver.solve(rhs));
    }
    return out;
}

TransientField solve_homogenized_elliptic(const MacroProblem& p) {
    check_problem(p);
    const EffectiveTensors& T = *p.tensors;
    const CellMesh& mesh = p.mesh->mesh;
    TransientField out;
    out.grid = p.grid;
    Matrix A;
    if (p.regime == Regime::KLessThan1) {
        if (!T.has_klt1) {
            // Both phases connected: the k<1 limit is zero.
            out.zero_limit = true;
            out.values.assign(p.grid.steps + 1, Vector::Zero(static_cast<Eigen::Index>(mesh.vertices.size())));
            return out;
        }
        A = T.Ahom_klt1.primary;
    } else if (p.regime == Regime::KGreaterThan1) {
        A = T.Ahom_kgt1;
    } else {
        throw Error(ErrorCode::ConfigInvalid, "elliptic solver needs regime klt1 or kgt1");
    }
    const DofMap dofs = DofMap::with_dirichlet(mesh, p.mesh->on_boundary);
    const SparseMatrix K = flux_stiffness(directional_stiffness(mesh, dofs), A);
    const SparseMatrix M = assemble_bulk_mass(mesh, dofs).matrix;
    const StepSolver solver(K, dofs.dirichlet);
    for (int n = 0; n <= p.grid.steps; ++n) out.values.push_back(solver.solve(source_load(M, mesh, p.f, p.grid.time(n))));
    return out;
}

TransientField solve_macro(const MacroProblem& p) {
    if (p.regime == Regime::K1ConnectedConnected || p.regime == Regime::K1ConnectedDisconnected)
        return solve_homogenized_memory(p);
    return solve_homogenized_elliptic(p);
}

// ---------------------------------------------------------------------------------------
// Outputs

namespace {

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

void write_solution_archive(std::ostream& os, const TransientField& u, const std::string& provenance) {
    os << "BHSOL 1\n";
    os << "# " << provenance << '\n';
    os << "grid " << num(u.grid.dt) << ' ' << u.grid.steps << '\n';
    os << "nverts " << (u.values.empty() ? 0 : u.values.front().size()) << '\n';
    os << "zero_limit " << (u.zero_limit ? 1 : 0) << '\n';
    for (std::size_t n = 0; n < u.values.size(); ++n) {
        os << "level " << n << ' ' << num(u.grid.time(static_cast<int>(n))) << '\n';
        for (Eigen::Index k = 0; k < u.values[n].size(); ++k) os << num(u.values[n][k]) << '\n';
    }
    os << "end\n";
}

TransientField read_solution_archive(std::istream& is) {
    auto fail = [](const std::string& m) { return Error(ErrorCode::FormatError, "BHSOL: " + m); };
    std::string line, tok;
    if (!std::getline(is, line) || line != "BHSOL 1") throw fail("bad header");
    TransientField u;
    long nverts = -1;
    bool ended = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        ls >> tok;
        if (tok == "end") {
            ended = true;
            break;
        } else if (tok == "grid") {
            std::string dt;
            ls >> dt >> u.grid.steps;
            u.grid.dt = std::strtod(dt.c_str(), nullptr);
        } else if (tok == "nverts") {
            ls >> nverts;
        } else if (tok == "zero_limit") {
            int z = 0;
            ls >> z;
            u.zero_limit = z != 0;
        } else if (tok == "level") {
            std::size_t n = 0;
            ls >> n;
            if (n != u.values.size() || nverts < 0) throw fail("levels out of order");
            Vector v(nverts);
            for (long k = 0; k < nverts; ++k) {
                std::string s;
                if (!(is >> s)) throw fail("truncated level");
                char* end = nullptr;
                v[k] = std::strtod(s.c_str(), &end);
                if (*end != '\0') throw fail("bad number '" + s + "'");
            }
            std::getline(is, line);
            u.values.push_back(std::move(v));
        } else {
            throw fail("unknown record '" + tok + "'");
        }
    }
    if (!ended) throw fail("missing end marker");
    if (static_cast<int>(u.values.size()) != u.grid.steps + 1) throw fail("level count does not match the grid");
    return u;
}

void write_summary_csv(std::ostream& os, const CellMesh& mesh, const TransientField& u, const Matrix& energy) {
    const DofMap dofs = DofMap::identity(mesh);
    const SparseMatrix M = assemble_bulk_mass(mesh, dofs).matrix;
    const SparseMatrix K = flux_stiffness(directional_stiffness(mesh, dofs), energy);
    os << "t, L2_norm, energy_norm\n";
    for (std::size_t n = 0; n < u.values.size(); ++n) {
        const Vector& v = u.values[n];
        os << num(u.grid.time(static_cast<int>(n))) << ", " << num(std::sqrt(std::max(0.0, v.dot(M * v)))) << ", "
           << num(std::sqrt(std::max(0.0, v.dot(K * v)))) << '\n';
    }
}

void write_vtk(std::ostream& os, const CellMesh& mesh, const Vector& values, const std::string& name) {
    const int nv = mesh.dim + 1;
    os << "# vtk DataFile Version 3.0\n" << name << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.vertices.size() << " double\n";
    for (const auto& x : mesh.vertices) os << num(x[0]) << ' ' << num(x[1]) << ' ' << num(x[2]) << '\n';
    os << "CELLS " << mesh.elements.size() << ' ' << mesh.elements.size() * (nv + 1) << '\n';
    for (const auto& el : mesh.elements) {
        os << nv;
        for (int k = 0; k < nv; ++k) os << ' ' << el.v[k];
        os << '\n';
    }
    os << "CELL_TYPES " << mesh.elements.size() << '\n';
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) os << (mesh.dim == 2 ? 5 : 10) << '\n';
    os << "CELL_DATA " << mesh.elements.size() << "\nSCALARS phase int 1\nLOOKUP_TABLE default\n";
    for (const auto& el : mesh.elements) os << static_cast<int>(el.phase) << '\n';
    os << "POINT_DATA " << mesh.vertices.size() << "\nSCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index k = 0; k < values.size(); ++k) os << num(values[k]) << '\n';
}

}  // namespace bh
