#include "bh/effective_tensors.hpp"

#include "bh/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace bh {

namespace {

double max_abs(const Matrix& M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }

// n_h(p) = ∫_Γ φ_p ν_h dσ, so that ∫_Γ u ν_h = n_h·u for P1 u.
std::vector<Vector> normal_moments(const CellSystem& sys) {
    const auto& surf = sys.surface();
    const int N = sys.dim();
    std::vector<Vector> n(N, Vector::Zero(sys.dofs().n_dofs));
    for (std::size_t f = 0; f < surf.size(); ++f) {
        const double w = surf.measure[f] / N;
        for (int k = 0; k < N; ++k) {
            const int d = sys.dofs().vertex_dof[surf.facets[f][k]];
            for (int h = 0; h < N; ++h) n[h][d] += w * surf.normals[f][h];
        }
    }
    return n;
}

struct Loads {
    std::vector<Vector> bulk;     // ∫λ∂_hφ
    std::vector<Vector> surface;  // α∫(∇^Bφ)_h
    std::vector<Vector> normal;   // ∫φν_h
};

Loads loads(const CellSystem& sys) {
    Loads L;
    for (int h = 0; h < sys.dim(); ++h) {
        L.bulk.push_back(sys.bulk_load(h));
        L.surface.push_back(sys.surface_load(h));
    }
    L.normal = normal_moments(sys);
    return L;
}

double jump(const Coefficients& c) { return c.lambda_out - c.lambda_int; }

// ∫λ(e_j+∇u_j)·(e_h+∇u_h), element by element.
Matrix bulk_gram(const CellSystem& sys, const std::vector<Vector>& u, const PhaseCoefficients& lam) {
    const auto& mesh = sys.mesh();
    const int N = sys.dim();
    Matrix G = Matrix::Zero(N, N);
    std::vector<Point> g(N);
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const double l = lam.at(mesh.elements[e].phase);
        if (l == 0.0) continue;
        const ElementGeometry eg = element_geometry(mesh, static_cast<int>(e));
        for (int j = 0; j < N; ++j) {
            g[j] = Point::Unit(j);
            for (int k = 0; k <= N; ++k) g[j] += u[j][sys.dofs().vertex_dof[mesh.elements[e].v[k]]] * eg.grad[k];
        }
        for (int j = 0; j < N; ++j)
            for (int h = 0; h < N; ++h) G(j, h) += l * eg.volume * g[j].dot(g[h]);
    }
    return G;
}

// α∫_Γ(Pe_j+∇^Bu_j)·(Pe_h+∇^Bu_h), facet by facet.
Matrix surface_gram(const CellSystem& sys, const std::vector<Vector>& u) {
    const auto& mesh = sys.mesh();
    const auto& surf = sys.surface();
    const int N = sys.dim();
    Matrix G = Matrix::Zero(N, N);
    std::vector<Point> g(N);
    for (std::size_t f = 0; f < surf.size(); ++f) {
        const FacetGeometry fg = facet_geometry(mesh, surf, static_cast<int>(f));
        const Point& nu = surf.normals[f];
        for (int j = 0; j < N; ++j) {
            g[j] = Point::Unit(j) - nu[j] * nu;
            for (int k = 0; k < N; ++k) g[j] += u[j][sys.dofs().vertex_dof[surf.facets[f][k]]] * fg.grad[k];
        }
        for (int j = 0; j < N; ++j)
            for (int h = 0; h < N; ++h) G(j, h) += sys.coeffs().alpha * fg.measure * g[j].dot(g[h]);
    }
    return G;
}

}  // namespace

double compute_lambda0(const CellMesh& mesh, const Coefficients& coeffs) {
    return coeffs.lambda_int * phase_volume(mesh, Phase::Int) + coeffs.lambda_out * phase_volume(mesh, Phase::Out);
}

DualForm compute_C0(const CellSystem& sys, const Chi0Result& chi0) {
    const int N = sys.dim();
    const auto& surf = sys.surface();
    DualForm r;
    r.primary = Matrix::Zero(N, N);
    // α∫_Γ(I−ν⊗ν)
    for (std::size_t f = 0; f < surf.size(); ++f) {
        const Point& nu = surf.normals[f];
        for (int j = 0; j < N; ++j)
            for (int h = 0; h < N; ++h)
                r.primary(j, h) += sys.coeffs().alpha * surf.measure[f] * ((j == h ? 1.0 : 0.0) - nu[j] * nu[h]);
    }
    for (int j = 0; j < N; ++j)
        for (int h = 0; h < N; ++h) r.primary(j, h) += sys.surface_load(h).dot(chi0.chi0[j]);
    r.secondary = surface_gram(sys, chi0.chi0);
    r.discrepancy = max_abs(r.primary - r.secondary);
    r.scale = sys.coeffs().alpha * surf.total_measure();
    return r;
}

A0Result compute_A0(const CellSystem& sys, const Chi0Result& chi0, const std::vector<Evolution>& chi1) {
    const int N = sys.dim();
    const Loads L = loads(sys);
    A0Result r;
    r.lambda0 = compute_lambda0(sys.mesh(), sys.coeffs());
    r.volume = Matrix::Zero(N, N);
    r.surface = Matrix::Zero(N, N);
    for (int j = 0; j < N; ++j) {
        const Vector& X = chi1[j].X[0];
        for (int h = 0; h < N; ++h) {
            const double s = L.surface[h].dot(X);
            r.volume(j, h) = L.bulk[h].dot(chi0.chi0[j]) + s;
            r.surface(j, h) = s - jump(sys.coeffs()) * L.normal[h].dot(chi0.chi0[j]);
        }
    }
    r.gram = bulk_gram(sys, chi0.chi0, sys.coeffs().phases());
    const Matrix full = r.volume + r.lambda0 * Matrix::Identity(N, N);
    r.scale = max_abs(full);
    r.discrepancy_surface = max_abs(r.volume - r.surface);
    r.discrepancy_gram = max_abs(full - r.gram);
    return r;
}

std::vector<DualForm> compute_kernel(const CellSystem& sys, const std::vector<Evolution>& fields) {
    const int N = sys.dim();
    const Loads L = loads(sys);
    const int steps = fields.front().grid.steps;
    std::vector<DualForm> out(steps + 1);
    double scale = 0.0;
    for (int n = 0; n <= steps; ++n) {
        DualForm& d = out[n];
        d.primary = Matrix::Zero(N, N);
        d.secondary = Matrix::Zero(N, N);
        for (int j = 0; j < N; ++j) {
            const Vector rate = fields[j].rate(n);
            const Vector& X = fields[j].X[n];
            for (int h = 0; h < N; ++h) {
                const double s = L.surface[h].dot(rate);
                d.primary(j, h) = s + L.bulk[h].dot(X);
                d.secondary(j, h) = s - jump(sys.coeffs()) * L.normal[h].dot(X);
            }
        }
        d.discrepancy = max_abs(d.primary - d.secondary);
        scale = std::max({scale, max_abs(d.primary), max_abs(d.secondary)});
    }
    for (auto& d : out) d.scale = scale;
    return out;
}

Matrix kernel_from_surface_pairing(const CellSystem& sys, const std::vector<Vector>& v,
                                   const std::vector<Evolution>& chi1, int n) {
    const int N = sys.dim();
    Matrix B(N, N);
    for (int j = 0; j < N; ++j) {
        const Vector SX = sys.S() * chi1[j].X[n];
        for (int h = 0; h < N; ++h) B(j, h) = -v[h].dot(SX);
    }
    return B;
}

DualForm compute_Ahom_klt1(const CellSystem& sys, const Chi0Result& chi0) {
    if (sys.mesh().kind != GeometryKind::Disk2D)
        throw Error(ErrorCode::WrongGeometryClass, "the k<1 matrix needs isolated inclusions (Disk2D)");
    const int N = sys.dim();
    const double lo = sys.coeffs().lambda_out;
    const PhaseCoefficients out_only{0.0, lo, 0.0};
    const SparseMatrix Kout = assemble_weighted_stiffness(sys.mesh(), sys.dofs(), out_only);
    const double vol_out = phase_volume(sys.mesh(), Phase::Out);
    DualForm r;
    r.primary = Matrix::Zero(N, N);
    for (int j = 0; j < N; ++j) {
        const Vector lj = assemble_gradient_load(sys.mesh(), sys.dofs(), out_only, Point::Unit(j));
        // Outer normal flux of y_j+χ₀^j on Γ in residual form.
        const Vector J = -(Kout * chi0.chi0[j] + lj);
        for (int h = 0; h < N; ++h) {
            const Vector lh = assemble_gradient_load(sys.mesh(), sys.dofs(), out_only, Point::Unit(h));
            double flux = 0.0;
            for (const auto& comp : sys.components())
                for (int d : comp) flux += J[d] * (sys.mesh().vertices[sys.dofs().dof_vertex[d]][h] - 0.5);
            r.primary(j, h) = (j == h ? lo * vol_out : 0.0) + lh.dot(chi0.chi0[j]) + flux;
        }
    }
    r.secondary = bulk_gram(sys, chi0.chi0, sys.coeffs().phases());
    r.discrepancy = max_abs(r.primary - r.secondary);
    r.scale = max_abs(r.secondary);
    return r;
}

Matrix compute_Ahom_kgt1(const CellSystem& sys, const std::vector<Vector>& chi0_tilde) {
    const int N = sys.dim();
    const double l0 = compute_lambda0(sys.mesh(), sys.coeffs());
    Matrix A = l0 * Matrix::Identity(N, N);
    for (int h = 0; h < N; ++h) {
        const Vector b = sys.bulk_load(h);
        for (int j = 0; j < N; ++j) A(j, h) += b.dot(chi0_tilde[j]);
    }
    return A;
}

Eigen::VectorXd sym_eigenvalues(const Matrix& M) {
    const Matrix S = 0.5 * (M + M.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

double asymmetry(const Matrix& M) {
    const double m = max_abs(M);
    return m > 0.0 ? max_abs(M - M.transpose()) / m : 0.0;
}

Matrix EffectiveTensors::lambda0_I_plus_A0() const { return A0.volume + lambda0 * Matrix::Identity(dim, dim); }

namespace {

Matrix interpolate(const std::vector<DualForm>& samples, const TimeGrid& grid, double t) {
    if (t < 0.0 || t > grid.horizon() * (1.0 + 1e-12))
        throw Error(ErrorCode::ConfigInvalid, "kernel requested beyond its sampled horizon");
    const double s = t / grid.dt;
    int n = static_cast<int>(std::floor(s));
    if (n >= grid.steps) return samples[grid.steps].primary;
    const double w = s - n;
    if (w <= 0.0) return samples[n].primary;
    return (1.0 - w) * samples[n].primary + w * samples[n + 1].primary;
}

}  // namespace

Matrix EffectiveTensors::B0_at(double t) const { return interpolate(B0, grid, t); }
Matrix EffectiveTensors::Phi_at(double t) const { return interpolate(Phi, grid, t); }

EffectiveTensors compute_effective_tensors(const CellSystem& sys, const CellFunctionSet& cells,
                                           const TensorTolerances& tol) {
    EffectiveTensors t;
    t.dim = sys.dim();
    t.kind = sys.mesh().kind;
    t.coeffs = sys.coeffs();
    t.lambda0 = compute_lambda0(sys.mesh(), sys.coeffs());
    t.gamma_measure = sys.surface().total_measure();
    t.grid = cells.grid;

    t.C0 = compute_C0(sys, cells.chi0);
    if (t.C0.discrepancy > tol.C0 * t.C0.scale)
        throw Error(ErrorCode::CrossCheckFailed, "C0 direct and Gram forms disagree");

    t.A0 = compute_A0(sys, cells.chi0, cells.chi1);
    if (t.A0.discrepancy_surface > tol.A0 * t.A0.scale || t.A0.discrepancy_gram > tol.A0 * t.A0.scale)
        throw Error(ErrorCode::CrossCheckFailed, "A0 volume, surface and Gram forms disagree");

    t.B0 = compute_kernel(sys, cells.chi1);
    for (const auto& d : t.B0)
        if (d.discrepancy > tol.kernel * std::max(d.scale, 1e-12))
            throw Error(ErrorCode::CrossCheckFailed, "B0 volume and surface forms disagree");
    t.Phi = compute_kernel(sys, cells.omega);
    for (const auto& d : t.Phi)
        if (d.discrepancy > tol.kernel * std::max(d.scale, 1e-12))
            throw Error(ErrorCode::CrossCheckFailed, "Phi volume and surface forms disagree");

    if (t.kind == GeometryKind::Disk2D) {
        t.has_klt1 = true;
        t.Ahom_klt1 = compute_Ahom_klt1(sys, cells.chi0);
        if (t.Ahom_klt1.discrepancy > tol.Ahom * t.Ahom_klt1.scale)
            throw Error(ErrorCode::CrossCheckFailed, "k<1 matrix and its Gram form disagree");
    }
    t.Ahom_kgt1 = compute_Ahom_kgt1(sys, solve_chi0_tilde(sys));
    return t;
}

// ---------------------------------------------------------------------------------------
// BHTENS 1

namespace {

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void put_matrix(std::ostream& os, const std::string& name, const Matrix& M) {
    os << "matrix " << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index k = 0; k < M.cols(); ++k) os << (k ? " " : "") << num(M(i, k));
        os << '\n';
    }
}

void put_scalar(std::ostream& os, const std::string& name, double x) { os << "scalar " << name << ' ' << num(x) << '\n'; }

void put_eigs(std::ostream& os, const std::string& name, const Matrix& M) {
    os << "eigenvalues " << name;
    const Eigen::VectorXd e = sym_eigenvalues(M);
    for (Eigen::Index i = 0; i < e.size(); ++i) os << ' ' << num(e[i]);
    os << '\n';
}

void put_kernel(std::ostream& os, const std::string& name, const std::vector<DualForm>& K, const TimeGrid& grid,
                int N) {
    os << "csv " << name << ' ' << K.size() << '\n';
    os << 't';
    for (int j = 1; j <= N; ++j)
        for (int h = 1; h <= N; ++h) os << ", " << name << j << h;
    for (int j = 1; j <= N; ++j)
        for (int h = 1; h <= N; ++h) os << ", " << name << "s" << j << h;
    os << ", discrepancy\n";
    for (std::size_t n = 0; n < K.size(); ++n) {
        os << num(grid.time(static_cast<int>(n)));
        for (int j = 0; j < N; ++j)
            for (int h = 0; h < N; ++h) os << ", " << num(K[n].primary(j, h));
        for (int j = 0; j < N; ++j)
            for (int h = 0; h < N; ++h) os << ", " << num(K[n].secondary(j, h));
        os << ", " << num(K[n].discrepancy) << '\n';
    }
}

}  // namespace

void write_tensor_report(std::ostream& os, const EffectiveTensors& t) {
    const int N = t.dim;
    os << "BHTENS 1\n";
    os << "geometry " << geometry_name(t.kind) << '\n';
    os << "dim " << N << '\n';
    os << "coefficients " << num(t.coeffs.lambda_int) << ' ' << num(t.coeffs.lambda_out) << ' '
       << num(t.coeffs.alpha) << '\n';
    os << "geometry_hash " << t.geometry_hash << '\n';
    os << "config_hash " << t.config_hash << '\n';
    os << "grid " << num(t.grid.dt) << ' ' << t.grid.steps << '\n';
    put_scalar(os, "lambda0", t.lambda0);
    put_scalar(os, "gamma_measure", t.gamma_measure);
    put_matrix(os, "A0_volume", t.A0.volume);
    put_matrix(os, "A0_surface", t.A0.surface);
    put_matrix(os, "A0_gram", t.A0.gram);
    put_scalar(os, "A0_discrepancy_surface", t.A0.discrepancy_surface);
    put_scalar(os, "A0_discrepancy_gram", t.A0.discrepancy_gram);
    put_scalar(os, "A0_scale", t.A0.scale);
    put_matrix(os, "C0_direct", t.C0.primary);
    put_matrix(os, "C0_gram", t.C0.secondary);
    put_scalar(os, "C0_discrepancy", t.C0.discrepancy);
    put_scalar(os, "C0_scale", t.C0.scale);
    if (t.has_klt1) {
        put_matrix(os, "Ahom_klt1", t.Ahom_klt1.primary);
        put_matrix(os, "Ahom_klt1_gram", t.Ahom_klt1.secondary);
        put_scalar(os, "Ahom_klt1_discrepancy", t.Ahom_klt1.discrepancy);
        put_scalar(os, "Ahom_klt1_scale", t.Ahom_klt1.scale);
    }
    put_matrix(os, "Ahom_kgt1", t.Ahom_kgt1);
    put_eigs(os, "lambda0_I_plus_A0", t.lambda0_I_plus_A0());
    put_eigs(os, "C0", t.C0.primary);
    if (t.has_klt1) put_eigs(os, "Ahom_klt1", t.Ahom_klt1.primary);
    put_eigs(os, "Ahom_kgt1", t.Ahom_kgt1);
    put_kernel(os, "B", t.B0, t.grid, N);
    put_kernel(os, "Phi", t.Phi, t.grid, N);
    os << "end\n";
}

EffectiveTensors read_tensor_report(std::istream& is) {
    auto fail = [](const std::string& m) { return Error(ErrorCode::FormatError, "BHTENS: " + m); };
    auto number = [&](const std::string& s) {
        char* end = nullptr;
        const double x = std::strtod(s.c_str(), &end);
        if (s.empty() || *end != '\0') throw fail("bad number '" + s + "'");
        return x;
    };
    std::string line, tok;
    if (!std::getline(is, line) || line != "BHTENS 1") throw fail("bad header");
    EffectiveTensors t;
    std::map<std::string, Matrix> mats;
    std::map<std::string, double> scalars;
    bool ended = false;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        if (!(ls >> tok)) continue;
        if (tok == "end") {
            ended = true;
            break;
        } else if (tok == "geometry") {
            std::string g;
            ls >> g;
            t.kind = parse_geometry_kind(g);
        } else if (tok == "dim") {
            ls >> t.dim;
        } else if (tok == "coefficients") {
            std::string a, b, c;
            ls >> a >> b >> c;
            t.coeffs = {number(a), number(b), number(c)};
        } else if (tok == "geometry_hash") {
            ls >> t.geometry_hash;
        } else if (tok == "config_hash") {
            ls >> t.config_hash;
        } else if (tok == "grid") {
            std::string dt;
            ls >> dt >> t.grid.steps;
            t.grid.dt = number(dt);
        } else if (tok == "scalar") {
            std::string name, v;
            ls >> name >> v;
            scalars[name] = number(v);
        } else if (tok == "matrix") {
            std::string name;
            int r = 0, c = 0;
            ls >> name >> r >> c;
            if (!ls || r < 0 || c < 0) throw fail("bad matrix header");
            Matrix M(r, c);
            for (int i = 0; i < r; ++i) {
                if (!std::getline(is, line)) throw fail("truncated matrix");
                std::istringstream rs(line);
                std::string v;
                for (int k = 0; k < c; ++k) {
                    if (!(rs >> v)) throw fail("short matrix row");
                    M(i, k) = number(v);
                }
            }
            mats[name] = M;
        } else if (tok == "eigenvalues") {
            continue;  // derived
        } else if (tok == "csv") {
            std::string name;
            std::size_t rows = 0;
            ls >> name >> rows;
            std::getline(is, line);  // column header
            const int N = t.dim;
            std::vector<DualForm> K(rows);
            for (std::size_t n = 0; n < rows; ++n) {
                if (!std::getline(is, line)) throw fail("truncated csv block");
                std::vector<double> vals;
                std::istringstream rs(line);
                std::string cell;
                while (std::getline(rs, cell, ',')) {
                    const auto b = cell.find_first_not_of(' ');
                    vals.push_back(number(b == std::string::npos ? "" : cell.substr(b)));
                }
                if (static_cast<int>(vals.size()) != 2 + 2 * N * N) throw fail("csv row width");
                K[n].primary.resize(N, N);
                K[n].secondary.resize(N, N);
                for (int j = 0; j < N; ++j)
                    for (int h = 0; h < N; ++h) {
                        K[n].primary(j, h) = vals[1 + j * N + h];
                        K[n].secondary(j, h) = vals[1 + N * N + j * N + h];
                    }
                K[n].discrepancy = vals.back();
            }
            double scale = 0.0;
            for (const auto& d : K) scale = std::max({scale, max_abs(d.primary), max_abs(d.secondary)});
            for (auto& d : K) d.scale = scale;
            if (name == "B") t.B0 = std::move(K);
            else if (name == "Phi") t.Phi = std::move(K);
            else throw fail("unknown csv block '" + name + "'");
        } else {
            throw fail("unknown record '" + tok + "'");
        }
    }
    if (!ended) throw fail("missing end marker");
    auto mat = [&](const std::string& n) {
        auto it = mats.find(n);
        if (it == mats.end()) throw fail("missing matrix " + n);
        return it->second;
    };
    auto sc = [&](const std::string& n) {
        auto it = scalars.find(n);
        if (it == scalars.end()) throw fail("missing scalar " + n);
        return it->second;
    };
    t.lambda0 = sc("lambda0");
    t.gamma_measure = sc("gamma_measure");
    t.A0.lambda0 = t.lambda0;
    t.A0.volume = mat("A0_volume");
    t.A0.surface = mat("A0_surface");
    t.A0.gram = mat("A0_gram");
    t.A0.discrepancy_surface = sc("A0_discrepancy_surface");
    t.A0.discrepancy_gram = sc("A0_discrepancy_gram");
    t.A0.scale = sc("A0_scale");
    t.C0.primary = mat("C0_direct");
    t.C0.secondary = mat("C0_gram");
    t.C0.discrepancy = sc("C0_discrepancy");
    t.C0.scale = sc("C0_scale");
    if (mats.count("Ahom_klt1")) {
        t.has_klt1 = true;
        t.Ahom_klt1.primary = mat("Ahom_klt1");
        t.Ahom_klt1.secondary = mat("Ahom_klt1_gram");
        t.Ahom_klt1.discrepancy = sc("Ahom_klt1_discrepancy");
        t.Ahom_klt1.scale = sc("Ahom_klt1_scale");
    }
    t.Ahom_kgt1 = mat("Ahom_kgt1");
    if (static_cast<int>(t.B0.size()) != t.grid.steps + 1 || static_cast<int>(t.Phi.size()) != t.grid.steps + 1)
        throw fail("kernel sample count does not match the grid");
    return t;
}

}  // namespace bh
