#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fiberinfer/sh_basis.hpp"

namespace fiberinfer {

/// Icosphere: subdivided icosahedron projected to the unit sphere. The vertex
/// set is antipodally symmetric; quadrature weights are per-vertex Voronoi
/// areas rescaled to sum to exactly 4 pi. Level k has 10 * 4^k + 2 vertices
/// (the default pipeline mesh, level 5, has 10242).
class SphericalMesh {
 public:
  static const SphericalMesh& icosphere(int level);  // cached per level

  const std::vector<Vector3d>& vertices() const { return vertices_; }
  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  const std::vector<std::vector<int>>& neighbors() const { return neighbors_; }
  const VectorXd& weights() const { return weights_; }
  /// Index of -v for vertex v.
  const std::vector<int>& antipode() const { return antipode_; }
  const std::vector<std::array<int, 3>>& faces() const { return faces_; }
  int level() const { return level_; }
  std::uint64_t content_hash() const { return hash_; }
  /// Maximum edge arc length in degrees.
  double max_edge_degrees() const { return max_edge_deg_; }

  /// Debug export: "x y z" vertex list and an adjacency CSV.
  void save_vertices(const std::string& path) const;
  void save_adjacency_csv(const std::string& path) const;

 private:
  SphericalMesh() = default;
  static SphericalMesh build(int level);
  std::vector<Vector3d> vertices_;
  std::vector<std::array<int, 3>> faces_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<int> antipode_;
  VectorXd weights_;
  int level_ = 0;
  std::uint64_t hash_ = 0;
  double max_edge_deg_ = 0.0;
};

/// Discretized density on a mesh.
struct OdfField {
  const SphericalMesh* mesh = nullptr;
  VectorXd values;

  double quadrature_integral() const { return mesh->weights().dot(values); }
};

/// Least-squares projection of mesh values onto the (even, hence antipodally
/// symmetric) basis, re-evaluated on the mesh, then clamped at zero. The
/// projection/synthesis operators are cached per (mesh, degree).
OdfField project_odf(const SphericalMesh& mesh, const VectorXd& values,
                     const ShBasis& basis);

/// Quadrature-weighted least-squares analysis operator A (K x V) and the
/// synthesis matrix Phi (V x K) for a basis on a mesh. A * Phi = I exactly,
/// so band-limited functions round-trip bit-for-bit through the pair.
struct MeshBasisOps {
  MatrixXd synthesis;  // V x K
  MatrixXd analysis;   // K x V
};
const MeshBasisOps& mesh_basis_ops(const SphericalMesh& mesh, int degree);

struct Peak {
  Vector3d orientation;  // upper-hemisphere canonical
  double value = 0.0;
};

/// Mesh-local maxima of the field (strictly greater than all neighbors),
/// thresholded at rel_threshold * max, deduplicated across antipodes, then
/// greedily pruned to pairwise separation >= min_sep_deg keeping the larger
/// value. Sorted by descending value; at most max_peaks returned.
std::vector<Peak> peak_detect(const OdfField& odf, double rel_threshold = 0.5,
                              double min_sep_deg = 10.0, int max_peaks = 3);

}  // namespace fiberinfer
