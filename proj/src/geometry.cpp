#include "bh/geometry.hpp"

#include "bh/error.hpp"
#include "bh/union_find.hpp"
#include "geometry_internal.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace bh {

const char* geometry_name(GeometryKind kind) {
    switch (kind) {
        case GeometryKind::Disk2D: return "Disk2D";
        case GeometryKind::Layered2D: return "Layered2D";
        case GeometryKind::TubeLattice3D: return "TubeLattice3D";
    }
    return "?";
}

GeometryKind parse_geometry_kind(const std::string& name) {
    if (name == "Disk2D") return GeometryKind::Disk2D;
    if (name == "Layered2D") return GeometryKind::Layered2D;
    if (name == "TubeLattice3D") return GeometryKind::TubeLattice3D;
    throw Error(ErrorCode::InvalidGeometry, "unknown geometry kind '" + name + "'");
}

double GeometrySpec::param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end())
        throw Error(ErrorCode::InvalidGeometry,
                    std::string(geometry_name(kind)) + " requires parameter '" + name + "'");
    return it->second;
}

double SurfaceMesh::total_measure() const {
    double s = 0.0;
    for (double m : measure) s += m;
    return s;
}

double SurfaceMesh::component_measure(int i) const {
    double s = 0.0;
    for (std::size_t f = 0; f < facets.size(); ++f)
        if (component[f] == i) s += measure[f];
    return s;
}

double simplex_volume(const CellMesh& mesh, int e) {
    const auto& el = mesh.elements[e];
    const Point& x0 = mesh.vertices[el.v[0]];
    if (mesh.dim == 2) {
        Eigen::Vector2d a = (mesh.vertices[el.v[1]] - x0).head<2>();
        Eigen::Vector2d b = (mesh.vertices[el.v[2]] - x0).head<2>();
        return 0.5 * (a.x() * b.y() - a.y() * b.x());
    }
    Point a = mesh.vertices[el.v[1]] - x0;
    Point b = mesh.vertices[el.v[2]] - x0;
    Point c = mesh.vertices[el.v[3]] - x0;
    return a.dot(b.cross(c)) / 6.0;
}

double phase_volume(const CellMesh& mesh, Phase phase) {
    double s = 0.0;
    for (std::size_t e = 0; e < mesh.elements.size(); ++e)
        if (mesh.elements[e].phase == phase) s += simplex_volume(mesh, static_cast<int>(e));
    return s;
}

Point element_centroid(const CellMesh& mesh, int e) {
    Point c = Point::Zero();
    const int nv = mesh.verts_per_element();
    for (int k = 0; k < nv; ++k) c += mesh.vertices[mesh.elements[e].v[k]];
    return c / nv;
}

namespace detail {

int phase_rank(Phase p) {
    switch (p) {
        case Phase::Int: return 0;
        case Phase::Membrane: return 1;
        case Phase::Out: return 2;
    }
    return 2;
}

FaceMap build_face_map(const CellMesh& mesh) {
    FaceMap faces;
    const int nv = mesh.verts_per_element();
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const auto& el = mesh.elements[e];
        for (int skip = 0; skip < nv; ++skip) {
            FaceKey key{-1, -1, -1};
            int k = 0;
            for (int a = 0; a < nv; ++a)
                if (a != skip) key[k++] = el.v[a];
            std::sort(key.begin(), key.begin() + mesh.dim);
            faces[key].push_back(static_cast<int>(e));
        }
    }
    return faces;
}

void extract_interface(CellMesh& mesh) {
    mesh.interface.clear();
    const FaceMap faces = build_face_map(mesh);
    for (const auto& [key, elems] : faces) {
        if (elems.size() != 2) continue;
        const int ra = phase_rank(mesh.elements[elems[0]].phase);
        const int rb = phase_rank(mesh.elements[elems[1]].phase);
        if (ra == rb) continue;
        InterfaceFacet f;
        f.v = key;
        f.elem_int = ra < rb ? elems[0] : elems[1];
        f.elem_out = ra < rb ? elems[1] : elems[0];
        mesh.interface.push_back(f);
    }
}

void orient_positive(CellMesh& mesh) {
    for (std::size_t e = 0; e < mesh.elements.size(); ++e)
        if (simplex_volume(mesh, static_cast<int>(e)) < 0.0)
            std::swap(mesh.elements[e].v[0], mesh.elements[e].v[1]);
}

std::vector<Point> grid_2d_vertices(int nx, int ny, const std::vector<double>& xs,
                                    const std::vector<double>& ys) {
    std::vector<Point> v;
    v.reserve((nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) v.emplace_back(xs[i], ys[j], 0.0);
    return v;
}

std::vector<PeriodicPair> grid_2d_pairs(int nx, int ny) {
    std::vector<PeriodicPair> pairs;
    auto id = [nx](int i, int j) { return i + (nx + 1) * j; };
    for (int j = 0; j <= ny; ++j) pairs.push_back({id(0, j), id(nx, j), 0});
    for (int i = 0; i <= nx; ++i) pairs.push_back({id(i, 0), id(i, ny), 1});
    return pairs;
}

}  // namespace detail

using detail::FaceKey;

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorCode::InvalidGeometry, msg);
}

int grid_cells(double h) {
    require(h > 0.0 && h < 0.5, "mesh size h must lie in (0, 0.5)");
    return static_cast<int>(std::ceil(1.0 / h - 1e-9));
}

// Structured square grid whose L∞ rings around the centre are bent onto circles.
// ring_radius(k) returns the circle radius for ring k, or a negative value for rings
// that interpolate between neighbouring control rings.
struct RingMap {
    int half = 0;                 // n/2
    std::vector<int> control;     // ring indices mapped to circles, increasing
    std::vector<double> radius;   // matching radii
};

Point ring_point(const RingMap& rm, int di, int dj) {
    const double c = 0.5;
    const int k = std::max(std::abs(di), std::abs(dj));
    if (k == 0) return Point(c, c, 0.0);
    const int n = 2 * rm.half;
    if (k == rm.half) return Point(double(di + rm.half) / n, double(dj + rm.half) / n, 0.0);
    const Eigen::Vector2d u(double(di) / k, double(dj) / k);
    const Eigen::Vector2d w = u / u.norm();
    Eigen::Vector2d p;
    const int k_first = rm.control.front();
    const int k_last = rm.control.back();
    if (k <= k_first) {
        const double t = double(k) / k_first;
        p = rm.radius.front() * t * ((1.0 - t) * u + t * w);
    } else if (k >= k_last) {
        const double t = double(k - k_last) / (rm.half - k_last);
        p = (1.0 - t) * rm.radius.back() * w + t * 0.5 * u;
    } else {
        std::size_t s = 0;
        while (rm.control[s + 1] < k) ++s;
        const double t = double(k - rm.control[s]) / (rm.control[s + 1] - rm.control[s]);
        p = ((1.0 - t) * rm.radius[s] + t * rm.radius[s + 1]) * w;
    }
    return Point(c + p.x(), c + p.y(), 0.0);
}

// Quads are split along the diagonal pointing at the centre, which keeps the
// triangulation invariant under quarter turns about the cell centre.
CellMesh ring_mesh(const RingMap& rm, const std::vector<Phase>& ring_phase) {
    const int n = 2 * rm.half;
    CellMesh mesh;
    mesh.dim = 2;
    mesh.kind = GeometryKind::Disk2D;
    auto id = [n](int i, int j) { return i + (n + 1) * j; };
    mesh.vertices.reserve((n + 1) * (n + 1));
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) mesh.vertices.push_back(ring_point(rm, i - rm.half, j - rm.half));
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double cx = i + 0.5 - rm.half;
            const double cy = j + 0.5 - rm.half;
            // Quad lies between rings ring_in and ring_in + 1.
            const int ring_in = static_cast<int>(std::floor(std::max(std::abs(cx), std::abs(cy))));
            const Phase ph = ring_phase[ring_in];
            const int v00 = id(i, j), v10 = id(i + 1, j), v01 = id(i, j + 1), v11 = id(i + 1, j + 1);
            if (cx * cy > 0.0) {
                mesh.elements.push_back({{v00, v10, v11, -1}, ph});
                mesh.elements.push_back({{v00, v11, v01, -1}, ph});
            } else {
                mesh.elements.push_back({{v00, v10, v01, -1}, ph});
                mesh.elements.push_back({{v10, v11, v01, -1}, ph});
            }
        }
    }
    mesh.periodic = detail::grid_2d_pairs(n, n);
    detail::orient_positive(mesh);
    detail::extract_interface(mesh);
    return mesh;
}

int even_grid(double h) {
    const int n = grid_cells(h);
    return n % 2 == 0 ? n : n + 1;
}

CellMesh build_disk(const GeometrySpec& spec) {
    const double r0 = spec.param("r0");
    require(r0 > 0.0 && r0 < 0.5, "Disk2D requires 0 < r0 < 0.5");
    const int n = even_grid(spec.h);
    RingMap rm;
    rm.half = n / 2;
    const int ks = std::clamp(static_cast<int>(std::lround(n * r0)), 1, rm.half - 1);
    rm.control = {ks};
    rm.radius = {r0};
    std::vector<Phase> ring_phase(rm.half);
    for (int k = 0; k < rm.half; ++k) ring_phase[k] = k < ks ? Phase::Int : Phase::Out;
    return ring_mesh(rm, ring_phase);
}

std::vector<double> layered_coords(double a, double b, double h) {
    std::vector<double> ys{0.0};
    const double bounds[4] = {0.0, a, b, 1.0};
    for (int s = 0; s < 3; ++s) {
        const double len = bounds[s + 1] - bounds[s];
        const int m = std::max(1, static_cast<int>(std::ceil(len / h - 1e-9)));
        for (int k = 1; k < m; ++k) ys.push_back(bounds[s] + len * k / m);
        ys.push_back(bounds[s + 1]);
    }
    return ys;
}

CellMesh build_layered(const GeometrySpec& spec) {
    const double a = spec.param("a");
    const double b = spec.param("b");
    require(0.0 < a && a < b && b < 1.0, "Layered2D requires 0 < a < b < 1");
    const int nx = grid_cells(spec.h);
    std::vector<double> xs(nx + 1);
    for (int i = 0; i <= nx; ++i) xs[i] = double(i) / nx;
    const std::vector<double> ys = layered_coords(a, b, spec.h);
    const int ny = static_cast<int>(ys.size()) - 1;

    CellMesh mesh;
    mesh.dim = 2;
    mesh.kind = GeometryKind::Layered2D;
    mesh.vertices = detail::grid_2d_vertices(nx, ny, xs, ys);
    auto id = [nx](int i, int j) { return i + (nx + 1) * j; };
    for (int j = 0; j < ny; ++j) {
        const double yc = 0.5 * (ys[j] + ys[j + 1]);
        const Phase ph = (yc > a && yc < b) ? Phase::Int : Phase::Out;
        for (int i = 0; i < nx; ++i) {
            mesh.elements.push_back({{id(i, j), id(i + 1, j), id(i + 1, j + 1), -1}, ph});
            mesh.elements.push_back({{id(i, j), id(i + 1, j + 1), id(i, j + 1), -1}, ph});
        }
    }
    mesh.periodic = detail::grid_2d_pairs(nx, ny);
    detail::extract_interface(mesh);
    return mesh;
}

}  // namespace

SurfaceMesh build_surface(const CellMesh& mesh) {
    SurfaceMesh s;
    s.dim = mesh.dim;
    const std::size_t nf = mesh.interface.size();
    s.facets.resize(nf);
    s.normals.resize(nf);
    s.measure.resize(nf);
    s.elem_int.resize(nf);
    s.elem_out.resize(nf);
    s.component.assign(nf, -1);

    for (std::size_t f = 0; f < nf; ++f) {
        const InterfaceFacet& fac = mesh.interface[f];
        std::array<int, 3> v = fac.v;
        const Point& a = mesh.vertices[v[0]];
        Point nrm;
        double meas;
        if (mesh.dim == 2) {
            const Point t = mesh.vertices[v[1]] - a;
            meas = t.norm();
            nrm = Point(t.y(), -t.x(), 0.0);
        } else {
            const Point cr = (mesh.vertices[v[1]] - a).cross(mesh.vertices[v[2]] - a);
            meas = 0.5 * cr.norm();
            nrm = cr;
        }
        if (!(meas > 0.0)) throw Error(ErrorCode::MeshFailure, "zero-measure interface facet");
        nrm /= nrm.norm();
        const Point dir = element_centroid(mesh, fac.elem_out) - element_centroid(mesh, fac.elem_int);
        if (nrm.dot(dir) < 0.0) {
            nrm = -nrm;
            std::swap(v[0], v[1]);
        }
        s.facets[f] = v;
        s.normals[f] = nrm;
        s.measure[f] = meas;
        s.elem_int[f] = fac.elem_int;
        s.elem_out[f] = fac.elem_out;
    }

    UnionFind uf(static_cast<int>(mesh.vertices.size()));
    for (const auto& pp : mesh.periodic) uf.unite(pp.p, pp.q);
    UnionFind fc(static_cast<int>(nf));
    std::map<int, int> first_facet;  // vertex class -> facet
    for (std::size_t f = 0; f < nf; ++f) {
        for (int k = 0; k < mesh.dim; ++k) {
            const int cls = uf.find(s.facets[f][k]);
            auto [it, inserted] = first_facet.emplace(cls, static_cast<int>(f));
            if (!inserted) fc.unite(it->second, static_cast<int>(f));
        }
    }
    std::map<int, int> label;
    for (std::size_t f = 0; f < nf; ++f) {
        const int root = fc.find(static_cast<int>(f));
        auto [it, inserted] = label.emplace(root, static_cast<int>(label.size()));
        s.component[f] = it->second;
    }
    s.n_components = static_cast<int>(label.size());
    return s;
}

std::pair<CellMesh, SurfaceMesh> build_unit_cell(const GeometrySpec& spec) {
    CellMesh mesh;
    switch (spec.kind) {
        case GeometryKind::Disk2D: mesh = build_disk(spec); break;
        case GeometryKind::Layered2D: mesh = build_layered(spec); break;
        case GeometryKind::TubeLattice3D: mesh = detail::build_tube_lattice(spec); break;
    }
    SurfaceMesh surf = build_surface(mesh);
    validate_cell_mesh(mesh, surf);
    return {std::move(mesh), std::move(surf)};
}

MembraneMesh build_membrane_cell(const GeometrySpec& spec, double eta) {
    require(spec.kind == GeometryKind::Disk2D, "membrane cells are built for Disk2D only");
    require(eta > 0.0 && eta <= 0.2, "membrane thickness must satisfy 0 < eta <= 0.2");
    const double r0 = spec.param("r0");
    const double r_in = r0 - 0.5 * eta;
    const double r_out = r0 + 0.5 * eta;
    require(r0 > 0.0 && r_in > 0.0 && r_out < 0.5, "membrane annulus must lie strictly inside the cell");
    const int n = even_grid(spec.h);
    RingMap rm;
    rm.half = n / 2;
    const int k1 = std::max(1, static_cast<int>(std::lround(n * r_in)));
    const int k2 = k1 + std::max(2, static_cast<int>(std::lround(n * eta)));
    if (k2 >= rm.half) throw Error(ErrorCode::MeshFailure, "mesh too coarse for the membrane band");
    rm.control = {k1, k2};
    rm.radius = {r_in, r_out};
    std::vector<Phase> ring_phase(rm.half);
    for (int k = 0; k < rm.half; ++k)
        ring_phase[k] = k < k1 ? Phase::Int : (k < k2 ? Phase::Membrane : Phase::Out);
    MembraneMesh mm;
    mm.mesh = ring_mesh(rm, ring_phase);
    mm.surface = build_surface(mm.mesh);
    mm.eta = eta;
    mm.r_inner = r_in;
    mm.r_outer = r_out;
    validate_cell_mesh(mm.mesh, mm.surface);
    return mm;
}

void validate_cell_mesh(const CellMesh& mesh, const SurfaceMesh& surf) {
    double total = 0.0;
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const double v = simplex_volume(mesh, static_cast<int>(e));
        if (!(v > 0.0)) throw Error(ErrorCode::MeshFailure, "non-positive element volume");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-10) throw Error(ErrorCode::MeshFailure, "cell volume differs from 1");
    for (const auto& pp : mesh.periodic) {
        const Point d = mesh.vertices[pp.q] - mesh.vertices[pp.p];
        Point e = Point::Zero();
        e[pp.axis] = 1.0;
        if (d != e) throw Error(ErrorCode::MeshFailure, "periodic pair is not an exact unit translate");
    }
    for (std::size_t f = 0; f < surf.size(); ++f) {
        const Point dir = element_centroid(mesh, surf.elem_out[f]) - element_centroid(mesh, surf.elem_int[f]);
        if (!(surf.normals[f].dot(dir) > 0.0)) throw Error(ErrorCode::MeshFailure, "interface normal orientation");
    }
    if (surf.size() == 0 && mesh.kind != GeometryKind::TubeLattice3D)
        throw Error(ErrorCode::MeshFailure, "no interface facets");
}

MicroMesh tile_micro_domain(const CellMesh& cell, double eps, const TileOptions& opts) {
    if (!(eps > 0.0) || eps > 1.0) throw Error(ErrorCode::NonIntegerTiling, "eps must lie in (0, 1]");
    const double inv = 1.0 / eps;
    const int n = static_cast<int>(std::lround(inv));
    if (std::abs(inv - n) > 1e-9 * inv) throw Error(ErrorCode::NonIntegerTiling, "1/eps is not an integer");

    const int dim = cell.dim;
    const int nv = static_cast<int>(cell.vertices.size());
    const int ncells = dim == 2 ? n * n : n * n * n;
    auto cell_index = [n, dim](const std::array<int, 3>& c) {
        return dim == 2 ? c[0] + n * c[1] : c[0] + n * (c[1] + n * c[2]);
    };
    auto cell_coords = [n, dim](int lin) {
        std::array<int, 3> c{lin % n, (lin / n) % n, dim == 3 ? lin / (n * n) : 0};
        return c;
    };

    UnionFind uf(ncells * nv);
    for (int c = 0; c < ncells; ++c) {
        const auto cc = cell_coords(c);
        for (const auto& pp : cell.periodic) {
            auto nb = cc;
            if (++nb[pp.axis] >= n) continue;
            uf.unite(c * nv + pp.q, cell_index(nb) * nv + pp.p);
        }
    }

    MicroMesh mm;
    mm.eps = 1.0 / n;
    mm.cells_per_side = n;
    CellMesh& m = mm.mesh;
    m.dim = dim;
    m.kind = cell.kind;
    std::vector<int> global(ncells * nv, -1);
    std::vector<int> root_id(ncells * nv, -1);
    for (int c = 0; c < ncells; ++c) {
        const auto cc = cell_coords(c);
        for (int v = 0; v < nv; ++v) {
            const int key = c * nv + v;
            const int r = uf.find(key);
            if (root_id[r] < 0) {
                root_id[r] = static_cast<int>(m.vertices.size());
                Point x = Point::Zero();
                for (int d = 0; d < dim; ++d) x[d] = (cc[d] + cell.vertices[v][d]) / n;
                m.vertices.push_back(x);
            }
            global[key] = root_id[r];
        }
    }
    mm.on_boundary.assign(m.vertices.size(), 0);
    for (std::size_t v = 0; v < m.vertices.size(); ++v)
        for (int d = 0; d < dim; ++d)
            if (m.vertices[v][d] == 0.0 || m.vertices[v][d] == 1.0) mm.on_boundary[v] = 1;

    const int ne = static_cast<int>(cell.elements.size());
    m.elements.reserve(static_cast<std::size_t>(ncells) * ne);
    mm.element_cell.reserve(static_cast<std::size_t>(ncells) * ne);
    for (int c = 0; c < ncells; ++c) {
        const auto cc = cell_coords(c);
        bool boundary_cell = false;
        for (int d = 0; d < dim; ++d) boundary_cell = boundary_cell || cc[d] == 0 || cc[d] == n - 1;
        const bool strip = boundary_cell && opts.strip_boundary_inclusions && cell.kind == GeometryKind::Disk2D;
        for (int e = 0; e < ne; ++e) {
            Element el = cell.elements[e];
            for (int k = 0; k <= dim; ++k) el.v[k] = global[c * nv + el.v[k]];
            if (strip) el.phase = Phase::Out;
            m.elements.push_back(el);
            mm.element_cell.push_back(c);
        }
        if (strip) continue;
        for (const auto& f : cell.interface) {
            InterfaceFacet g = f;
            for (int k = 0; k < dim; ++k) g.v[k] = global[c * nv + f.v[k]];
            g.elem_int = c * ne + f.elem_int;
            g.elem_out = c * ne + f.elem_out;
            if (cell.kind == GeometryKind::TubeLattice3D) {
                bool touches = false;
                for (int k = 0; k < dim; ++k) touches = touches || mm.on_boundary[g.v[k]];
                if (touches) continue;
            }
            m.interface.push_back(g);
        }
    }
    mm.surface = build_surface(m);
    return mm;
}

namespace {

void put(std::ostream& os, double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    os << buf;
}

const char* phase_code(Phase p) {
    switch (p) {
        case Phase::Int: return "0";
        case Phase::Out: return "1";
        case Phase::Membrane: return "2";
    }
    return "1";
}

template <class T>
T read_value(std::istream& is, const char* what) {
    T x;
    if (!(is >> x)) throw Error(ErrorCode::FormatError, std::string("BHMESH: cannot read ") + what);
    return x;
}

double read_double(std::istream& is, const char* what) {
    std::string tok = read_value<std::string>(is, what);
    char* end = nullptr;
    const double x = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw Error(ErrorCode::FormatError, std::string("BHMESH: bad number for ") + what);
    return x;
}

}  // namespace

void write_mesh(std::ostream& os, const CellMesh& mesh, const SurfaceMesh& surf) {
    const int N = mesh.dim;
    os << "BHMESH 1 " << geometry_name(mesh.kind) << '\n';
    os << mesh.vertices.size() << ' ' << N << '\n';
    for (const auto& x : mesh.vertices) {
        for (int d = 0; d < N; ++d) {
            if (d) os << ' ';
            put(os, x[d]);
        }
        os << '\n';
    }
    os << mesh.elements.size() << '\n';
    for (const auto& el : mesh.elements) {
        for (int k = 0; k <= N; ++k) os << el.v[k] << ' ';
        os << phase_code(el.phase) << '\n';
    }
    os << surf.size() << '\n';
    for (std::size_t f = 0; f < surf.size(); ++f) {
        for (int k = 0; k < N; ++k) os << surf.facets[f][k] << ' ';
        os << surf.component[f];
        for (int d = 0; d < N; ++d) {
            os << ' ';
            put(os, surf.normals[f][d]);
        }
        os << '\n';
    }
    os << mesh.periodic.size() << '\n';
    for (const auto& pp : mesh.periodic) os << pp.p << ' ' << pp.q << ' ' << pp.axis << '\n';
}

std::string mesh_to_string(const CellMesh& mesh, const SurfaceMesh& surf) {
    std::ostringstream os;
    write_mesh(os, mesh, surf);
    return os.str();
}

std::pair<CellMesh, SurfaceMesh> read_mesh(std::istream& is) {
    if (read_value<std::string>(is, "magic") != "BHMESH" || read_value<int>(is, "version") != 1)
        throw Error(ErrorCode::FormatError, "not a BHMESH 1 file");
    CellMesh mesh;
    mesh.kind = parse_geometry_kind(read_value<std::string>(is, "geometry kind"));
    const auto nv = read_value<std::size_t>(is, "vertex count");
    mesh.dim = read_value<int>(is, "dimension");
    if (mesh.dim != 2 && mesh.dim != 3) throw Error(ErrorCode::FormatError, "BHMESH: dimension must be 2 or 3");
    const int N = mesh.dim;
    mesh.vertices.assign(nv, Point::Zero());
    for (auto& x : mesh.vertices)
        for (int d = 0; d < N; ++d) x[d] = read_double(is, "vertex coordinate");
    const auto ne = read_value<std::size_t>(is, "element count");
    mesh.elements.resize(ne);
    for (auto& el : mesh.elements) {
        for (int k = 0; k <= N; ++k) {
            el.v[k] = read_value<int>(is, "element vertex");
            if (el.v[k] < 0 || static_cast<std::size_t>(el.v[k]) >= nv)
                throw Error(ErrorCode::FormatError, "BHMESH: element vertex out of range");
        }
        const int ph = read_value<int>(is, "phase");
        if (ph < 0 || ph > 2) throw Error(ErrorCode::FormatError, "BHMESH: bad phase");
        el.phase = static_cast<Phase>(ph);
    }
    const auto nf = read_value<std::size_t>(is, "facet count");
    SurfaceMesh surf;
    surf.dim = N;
    const detail::FaceMap faces = detail::build_face_map(mesh);
    for (std::size_t f = 0; f < nf; ++f) {
        std::array<int, 3> v{-1, -1, -1};
        for (int k = 0; k < N; ++k) v[k] = read_value<int>(is, "facet vertex");
        const int comp = read_value<int>(is, "facet component");
        Point nrm = Point::Zero();
        for (int d = 0; d < N; ++d) nrm[d] = read_double(is, "facet normal");
        FaceKey key = v;
        std::sort(key.begin(), key.begin() + N);
        auto it = faces.find(key);
        if (it == faces.end() || it->second.size() != 2)
            throw Error(ErrorCode::FormatError, "BHMESH: interface facet without two adjacent elements");
        const int e0 = it->second[0], e1 = it->second[1];
        const bool first_inner =
            detail::phase_rank(mesh.elements[e0].phase) < detail::phase_rank(mesh.elements[e1].phase);
        InterfaceFacet fac;
        fac.v = v;
        fac.elem_int = first_inner ? e0 : e1;
        fac.elem_out = first_inner ? e1 : e0;
        mesh.interface.push_back(fac);
        surf.facets.push_back(v);
        surf.normals.push_back(nrm);
        surf.component.push_back(comp);
        surf.elem_int.push_back(fac.elem_int);
        surf.elem_out.push_back(fac.elem_out);
        double meas;
        if (N == 2) {
            meas = (mesh.vertices[v[1]] - mesh.vertices[v[0]]).norm();
        } else {
            meas = 0.5 * (mesh.vertices[v[1]] - mesh.vertices[v[0]])
                             .cross(mesh.vertices[v[2]] - mesh.vertices[v[0]])
                             .norm();
        }
        surf.measure.push_back(meas);
        surf.n_components = std::max(surf.n_components, comp + 1);
    }
    const auto np = read_value<std::size_t>(is, "pair count");
    mesh.periodic.resize(np);
    for (auto& pp : mesh.periodic) {
        pp.p = read_value<int>(is, "pair p");
        pp.q = read_value<int>(is, "pair q");
        pp.axis = read_value<int>(is, "pair axis");
    }
    return {std::move(mesh), std::move(surf)};
}

}  // namespace bh
