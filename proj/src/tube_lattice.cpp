// Tube-lattice cell: three orthogonal cylinders through the face centres, fitted by
// snapping near-surface grid vertices and cutting Kuhn tetrahedra along the linear
// interpolant of the level set.

#include "bh/error.hpp"
#include "geometry_internal.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace bh::detail {

namespace {

struct LevelSet {
    double rho;

    // Distance to the nearest cylinder axis minus rho, with the gradient of the active branch.
    double eval(const Point& x, Point* grad = nullptr) const {
        double best = 1e300;
        Point g = Point::Zero();
        for (int a = 0; a < 3; ++a) {
            Point d = x - Point(0.5, 0.5, 0.5);
            d[a] = 0.0;
            const double r = d.norm();
            if (r < best) {
                best = r;
                g = r > 0.0 ? Point(d / r) : Point::Zero();
            }
        }
        if (grad) *grad = g;
        return best - rho;
    }
};

int sign_of(double v) { return v < 0.0 ? -1 : (v > 0.0 ? 1 : 0); }

struct Builder {
    int n;
    double h;
    LevelSet ls;
    std::vector<Point> pos;
    std::vector<double> phi;
    std::vector<int> canon;                 // canonical id per mesh vertex
    std::map<std::pair<int, int>, int> cut_of_edge;  // global edge -> vertex id
    std::map<std::pair<int, int>, int> canon_cut;    // canonical edge -> canonical id
    std::vector<std::pair<int, int>> cut_edge;       // per cut vertex: its global edge
    int n_grid = 0;

    int gid(int i, int j, int k) const { return i + (n + 1) * (j + (n + 1) * k); }

    int cut(int a, int b) {
        const std::pair<int, int> key = std::minmax(a, b);
        auto it = cut_of_edge.find(key);
        if (it != cut_of_edge.end()) return it->second;
        // Interpolate from the endpoint with the smaller canonical id so periodic images
        // perform identical arithmetic.
        int p = a, q = b;
        if (canon[q] < canon[p]) std::swap(p, q);
        const double t = phi[p] / (phi[p] - phi[q]);
        const int id = static_cast<int>(pos.size());
        pos.push_back(pos[p] + t * (pos[q] - pos[p]));
        phi.push_back(0.0);
        const std::pair<int, int> ckey = std::minmax(canon[a], canon[b]);
        auto [cit, inserted] = canon_cut.emplace(ckey, n * n * n + static_cast<int>(canon_cut.size()));
        canon.push_back(cit->second);
        cut_of_edge.emplace(key, id);
        cut_edge.push_back(key);
        return id;
    }
};

using Polygon = std::vector<int>;

double tet_volume(const std::vector<Point>& pos, int a, int b, int c, int d) {
    return (pos[b] - pos[a]).dot((pos[c] - pos[a]).cross(pos[d] - pos[a])) / 6.0;
}

}  // namespace

CellMesh build_tube_lattice(const GeometrySpec& spec) {
    const double rho = spec.param("rho");
    if (!(rho > 0.0 && rho < 0.5)) throw Error(ErrorCode::InvalidGeometry, "TubeLattice3D requires 0 < rho < 0.5");
    if (!(spec.h > 0.0 && spec.h <= 1.0 / 3.0))
        throw Error(ErrorCode::InvalidGeometry, "TubeLattice3D requires 0 < h <= 1/3");

    Builder B;
    B.n = static_cast<int>(std::ceil(1.0 / spec.h - 1e-9));
    B.h = 1.0 / B.n;
    B.ls.rho = rho;
    const int n = B.n;

    for (int k = 0; k <= n; ++k)
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i) {
                B.pos.emplace_back(double(i) / n, double(j) / n, double(k) / n);
                B.canon.push_back((i % n) + n * ((j % n) + n * (k % n)));
            }
    B.n_grid = static_cast<int>(B.pos.size());
    B.phi.resize(B.n_grid);
    const std::vector<Point> grid_pos = B.pos;

    // Snap vertices close to the surface onto it. Face coordinates stay exact because the
    // only cylinder reaching a face is the one orthogonal to it.
    const double snap_tol = 0.2 * B.h;
    for (int v = 0; v < B.n_grid; ++v) {
        Point x = B.pos[v];
        double f = B.ls.eval(x);
        if (std::abs(f) < snap_tol) {
            Point y = x;
            bool ok = false;
            for (int it = 0; it < 50; ++it) {
                Point g;
                const double fy = B.ls.eval(y, &g);
                if (std::abs(fy) < 1e-15) {
                    ok = true;
                    break;
                }
                if (g.squaredNorm() == 0.0) break;
                y -= fy * g;
            }
            for (int d = 0; d < 3; ++d)
                if (x[d] == 0.0 || x[d] == 1.0) y[d] = x[d];
            if (ok && (y - x).norm() < 0.5 * B.h && std::abs(B.ls.eval(y)) < 1e-12) {
                B.pos[v] = y;
                B.phi[v] = 0.0;
                continue;
            }
        }
        B.phi[v] = f;
    }

    static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    static const int tet_faces[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};

    CellMesh mesh;
    mesh.dim = 3;
    mesh.kind = GeometryKind::TubeLattice3D;

    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                for (const auto& pm : perms) {
                    int idx[3] = {i, j, k};
                    std::array<int, 4> t;
                    t[0] = B.gid(idx[0], idx[1], idx[2]);
                    for (int s = 0; s < 3; ++s) {
                        ++idx[pm[s]];
                        t[s + 1] = B.gid(idx[0], idx[1], idx[2]);
                    }
                    int sg[4];
                    bool has_neg = false, has_pos = false;
                    for (int a = 0; a < 4; ++a) {
                        sg[a] = sign_of(B.phi[t[a]]);
                        has_neg = has_neg || sg[a] < 0;
                        has_pos = has_pos || sg[a] > 0;
                    }
                    if (!has_neg || !has_pos) {
                        // Orientation from the unsnapped grid so that inversion by snapping is caught below.
                        if (tet_volume(grid_pos, t[0], t[1], t[2], t[3]) < 0.0) std::swap(t[2], t[3]);
                        mesh.elements.push_back({t, has_neg ? Phase::Int : Phase::Out});
                        continue;
                    }

                    // Interface polygon: zero vertices and cut points, ordered by angle.
                    Polygon iface;
                    for (int a = 0; a < 4; ++a)
                        if (sg[a] == 0) iface.push_back(t[a]);
                    for (int a = 0; a < 4; ++a)
                        for (int b = a + 1; b < 4; ++b)
                            if (sg[a] * sg[b] < 0) iface.push_back(B.cut(t[a], t[b]));
                    {
                        Point c = Point::Zero();
                        for (int v : iface) c += B.pos[v];
                        c /= double(iface.size());
                        Eigen::Matrix3d J;
                        for (int a = 0; a < 3; ++a) J.col(a) = B.pos[t[a + 1]] - B.pos[t[0]];
                        Eigen::Vector3d dphi(B.phi[t[1]] - B.phi[t[0]], B.phi[t[2]] - B.phi[t[0]],
                                             B.phi[t[3]] - B.phi[t[0]]);
                        const Point g = J.transpose().inverse() * dphi;
                        Point e1 = (B.pos[iface[0]] - c);
                        e1 -= g.dot(e1) / g.squaredNorm() * g;
                        e1.normalize();
                        const Point e2 = g.normalized().cross(e1);
                        std::vector<std::pair<double, int>> ang;
                        for (int v : iface) {
                            const Point d = B.pos[v] - c;
                            ang.emplace_back(std::atan2(d.dot(e2), d.dot(e1)), v);
                        }
                        std::sort(ang.begin(), ang.end());
                        iface.clear();
                        for (auto& pr : ang) iface.push_back(pr.second);
                    }

                    for (int side : {-1, 1}) {
                        std::vector<Polygon> faces;
                        std::set<std::vector<int>> seen;
                        auto add_face = [&](const Polygon& poly) {
                            if (poly.size() < 3) return;
                            std::vector<int> key = poly;
                            std::sort(key.begin(), key.end());
                            if (seen.insert(key).second) faces.push_back(poly);
                        };
                        for (const auto& tf : tet_faces) {
                            Polygon poly;
                            for (int e = 0; e < 3; ++e) {
                                const int a = tf[e], b = tf[(e + 1) % 3];
                                if (sg[a] == side || sg[a] == 0) poly.push_back(t[a]);
                                if (sg[a] * sg[b] < 0) poly.push_back(B.cut(t[a], t[b]));
                            }
                            add_face(poly);
                        }
                        add_face(iface);

                        std::set<int> verts;
                        for (const auto& f : faces) verts.insert(f.begin(), f.end());
                        if (verts.size() < 4) continue;
                        int apex = *verts.begin();
                        for (int v : verts)
                            if (B.canon[v] < B.canon[apex]) apex = v;
                        const Phase ph = side < 0 ? Phase::Int : Phase::Out;
                        for (const auto& f : faces) {
                            if (std::find(f.begin(), f.end(), apex) != f.end()) continue;
                            std::size_t s0 = 0;
                            for (std::size_t a = 1; a < f.size(); ++a)
                                if (B.canon[f[a]] < B.canon[f[s0]]) s0 = a;
                            const std::size_t m = f.size();
                            for (std::size_t a = 1; a + 1 < m; ++a) {
                                std::array<int, 4> tet{apex, f[s0], f[(s0 + a) % m], f[(s0 + a + 1) % m]};
                                if (tet_volume(B.pos, tet[0], tet[1], tet[2], tet[3]) < 0.0)
                                    std::swap(tet[2], tet[3]);
                                mesh.elements.push_back({tet, ph});
                            }
                        }
                    }
                }

    mesh.vertices = B.pos;
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const auto& t = mesh.elements[e].v;
        const double vol = tet_volume(mesh.vertices, t[0], t[1], t[2], t[3]);
        if (!(vol > 1e-9 * B.h * B.h * B.h))
            throw Error(ErrorCode::MeshFailure, "degenerate tetrahedron after interface fitting");
    }

    // Periodic pairs: grid vertices on the low faces and cut points on low-face edges.
    for (int k = 0; k <= n; ++k)
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i) {
                const int idx[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    if (idx[a] != 0) continue;
                    int im[3] = {i, j, k};
                    im[a] = n;
                    mesh.periodic.push_back({B.gid(i, j, k), B.gid(im[0], im[1], im[2]), a});
                }
            }
    auto grid_index = [n](int g) {
        return std::array<int, 3>{g % (n + 1), (g / (n + 1)) % (n + 1), g / ((n + 1) * (n + 1))};
    };
    for (std::size_t c = 0; c < B.cut_edge.size(); ++c) {
        const auto [p, q] = B.cut_edge[c];
        const auto ip = grid_index(p), iq = grid_index(q);
        for (int a = 0; a < 3; ++a) {
            if (ip[a] != 0 || iq[a] != 0) continue;
            auto jp = ip, jq = iq;
            jp[a] = n;
            jq[a] = n;
            const std::pair<int, int> key = std::minmax(B.gid(jp[0], jp[1], jp[2]), B.gid(jq[0], jq[1], jq[2]));
            auto it = B.cut_of_edge.find(key);
            if (it == B.cut_of_edge.end()) throw Error(ErrorCode::MeshFailure, "missing periodic image of a cut point");
            mesh.periodic.push_back({B.n_grid + static_cast<int>(c), it->second, a});
        }
    }

    extract_interface(mesh);
    return mesh;
}

}  // namespace bh::detail
