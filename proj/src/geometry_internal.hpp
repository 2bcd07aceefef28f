#pragma once

#include "bh/geometry.hpp"

#include <array>
#include <map>
#include <vector>

namespace bh::detail {

using FaceKey = std::array<int, 3>;  // sorted vertex ids, -1 padded in 2D
using FaceMap = std::map<FaceKey, std::vector<int>>;

int phase_rank(Phase p);
FaceMap build_face_map(const CellMesh& mesh);
void extract_interface(CellMesh& mesh);
void orient_positive(CellMesh& mesh);
std::vector<Point> grid_2d_vertices(int nx, int ny, const std::vector<double>& xs, const std::vector<double>& ys);
std::vector<PeriodicPair> grid_2d_pairs(int nx, int ny);

CellMesh build_tube_lattice(const GeometrySpec& spec);

}  // namespace bh::detail
