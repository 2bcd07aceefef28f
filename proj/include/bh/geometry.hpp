#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace bh {

enum class GeometryKind { Disk2D, Layered2D, TubeLattice3D };

enum class Phase : std::uint8_t { Int = 0, Out = 1, Membrane = 2 };

const char* geometry_name(GeometryKind kind);
GeometryKind parse_geometry_kind(const std::string& name);

using Point = Eigen::Vector3d;  // unused trailing components are zero in 2D

struct GeometrySpec {
    GeometryKind kind = GeometryKind::Disk2D;
    std::map<std::string, double> params;  // r0 | a, b | rho
    double h = 0.02;

    double param(const std::string& name) const;
    int dim() const { return kind == GeometryKind::TubeLattice3D ? 3 : 2; }
};

struct Element {
    std::array<int, 4> v{};  // first dim+1 entries are used
    Phase phase = Phase::Out;
};

/// Facet of Γ shared by an inner and an outer element. For membrane meshes "inner"
/// is the side closer to the inclusion centre.
struct InterfaceFacet {
    std::array<int, 3> v{};  // first dim entries are used
    int elem_int = -1;
    int elem_out = -1;
};

/// Vertex q is the image of p under translation by e_axis.
struct PeriodicPair {
    int p = 0;
    int q = 0;
    int axis = 0;
};

struct CellMesh {
    int dim = 2;
    GeometryKind kind = GeometryKind::Disk2D;
    std::vector<Point> vertices;
    std::vector<Element> elements;
    std::vector<PeriodicPair> periodic;
    std::vector<InterfaceFacet> interface;

    int verts_per_element() const { return dim + 1; }
};

struct SurfaceMesh {
    int dim = 2;  // ambient dimension
    std::vector<std::array<int, 3>> facets;
    std::vector<Point> normals;  // unit, from elem_int into elem_out
    std::vector<int> component;  // 0-based
    std::vector<double> measure;
    std::vector<int> elem_int;
    std::vector<int> elem_out;
    int n_components = 0;

    std::size_t size() const { return facets.size(); }
    double total_measure() const;
    double component_measure(int i) const;
};

struct MicroMesh {
    CellMesh mesh;  // no periodic pairs
    SurfaceMesh surface;
    std::vector<char> on_boundary;  // per vertex, x on ∂Ω
    std::vector<int> element_cell;  // linear cell index per element
    double eps = 1.0;
    int cells_per_side = 1;
};

struct MembraneMesh {
    CellMesh mesh;
    SurfaceMesh surface;
    double eta = 0.0;
    double r_inner = 0.0;
    double r_outer = 0.0;
};

struct TileOptions {
    /// Disk cells touching ∂Ω lose their inclusion (all phases become Out).
    bool strip_boundary_inclusions = true;
};

/// Interface-fitted periodic unit cell and its interface triangulation.
std::pair<CellMesh, SurfaceMesh> build_unit_cell(const GeometrySpec& spec);

/// Thick-membrane variant of the disk cell: core, annulus of width eta, outer phase.
MembraneMesh build_membrane_cell(const GeometrySpec& spec, double eta);

MicroMesh tile_micro_domain(const CellMesh& cell, double eps, const TileOptions& opts = {});

/// Orientation, normals, measures and connected components of the interface facets.
/// Periodic pairs of the mesh are honoured when labelling components.
SurfaceMesh build_surface(const CellMesh& mesh);

double simplex_volume(const CellMesh& mesh, int e);
double phase_volume(const CellMesh& mesh, Phase phase);
Point element_centroid(const CellMesh& mesh, int e);

/// Throws MeshFailure when a structural invariant is violated.
void validate_cell_mesh(const CellMesh& mesh, const SurfaceMesh& surf);

/// ASCII BHMESH 1 serialization. Reading recomputes facet adjacency and measures;
/// components and normals are taken from the file.
void write_mesh(std::ostream& os, const CellMesh& mesh, const SurfaceMesh& surf);
std::pair<CellMesh, SurfaceMesh> read_mesh(std::istream& is);
std::string mesh_to_string(const CellMesh& mesh, const SurfaceMesh& surf);

}  // namespace bh
