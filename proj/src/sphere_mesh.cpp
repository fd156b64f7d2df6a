#include "fiberinfer/sphere_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <unordered_map>

namespace fiberinfer {

namespace {

std::uint64_t quantize_key(const Vector3d& v) {
  // 1e-9 grid is far finer than any mesh spacing and absorbs rounding noise.
  const auto q = [](double x) {
    return static_cast<std::int64_t>(std::llround(x * 1e9));
  };
  std::uint64_t h = fnv1a("v", 1);
  const std::int64_t k[3] = {q(v.x()), q(v.y()), q(v.z())};
  return fnv1a(k, sizeof(k), h);
}

double spherical_triangle_area(const Vector3d& a, const Vector3d& b,
                               const Vector3d& c) {
  // L'Huilier via the vector form: E = 2 atan2(|a.(b x c)|, 1 + a.b + b.c + c.a)
  const double num = std::abs(a.dot(b.cross(c)));
  const double den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
  return 2.0 * std::atan2(num, den);
}

}  // namespace

SphericalMesh SphericalMesh::build(int level) {
  if (level < 0 || level > 7) throw InvalidInput("icosphere: level out of range");
  SphericalMesh mesh;
  mesh.level_ = level;

  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vector3d> verts = {
      {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (Vector3d& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int s = 0; s < level; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    const auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Vector3d m = (verts[a] + verts[b]).normalized();
      verts.push_back(m);
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  mesh.vertices_ = std::move(verts);
  mesh.faces_ = std::move(faces);
  const int v_count = mesh.vertex_count();

  // Neighbor lists from face edges.
  std::vector<std::set<int>> nbr(v_count);
  for (const auto& f : mesh.faces_)
    for (int e = 0; e < 3; ++e) {
      nbr[f[e]].insert(f[(e + 1) % 3]);
      nbr[f[e]].insert(f[(e + 2) % 3]);
    }
  mesh.neighbors_.resize(v_count);
  for (int v = 0; v < v_count; ++v)
    mesh.neighbors_[v].assign(nbr[v].begin(), nbr[v].end());

  // Vertex quadrature weights. Start from one third of incident
  // spherical-triangle area, then apply a least-norm moment correction so the
  // rule integrates every even spherical harmonic up to the highest feasible
  // degree exactly (area weights alone leave O(1e-3) Gram errors, which is
  // not enough for the orthonormality contracts downstream).
  mesh.weights_ = VectorXd::Zero(v_count);
  for (const auto& f : mesh.faces_) {
    const double area = spherical_triangle_area(
        mesh.vertices_[f[0]], mesh.vertices_[f[1]], mesh.vertices_[f[2]]);
    for (int e = 0; e < 3; ++e) mesh.weights_[f[e]] += area / 3.0;
  }
  mesh.weights_ *= kFourPi / mesh.weights_.sum();
  {
    int start_degree = 0;
    for (int L = 40; L >= 2; L -= 2)
      if (ShBasis::dimension_for(L) <= (v_count * 7) / 10) {
        start_degree = L;
        break;
      }
    // Icosahedral symmetry makes some high-degree harmonics alias exactly on
    // coarse vertex sets, so step down until the moment system is regular.
    for (int L = start_degree; L >= 4; L -= 2) {
      const ShBasis moment_basis(L);
      const MatrixXd a = moment_basis.eval(mesh.vertices_).transpose();  // K x V
      VectorXd b = VectorXd::Zero(moment_basis.dimension());
      b[0] = 2.0 * std::sqrt(kPi);  // integral of Y_00 over S^2
      const VectorXd residual = b - a * mesh.weights_;
      Eigen::LLT<MatrixXd> llt(a * a.transpose());
      if (llt.info() != Eigen::Success) continue;
      const VectorXd corrected = mesh.weights_ + a.transpose() * llt.solve(residual);
      if (corrected.minCoeff() <= 0.0) continue;
      if ((a * corrected - b).cwiseAbs().maxCoeff() > 1e-10) continue;
      mesh.weights_ = corrected;
      break;
    }
  }

  // Antipode lookup; the icosahedron and midpoint subdivision both preserve
  // the antipodal symmetry of the vertex set.
  std::unordered_map<std::uint64_t, int> index;
  index.reserve(v_count * 2);
  for (int v = 0; v < v_count; ++v) index.emplace(quantize_key(mesh.vertices_[v]), v);
  mesh.antipode_.resize(v_count);
  for (int v = 0; v < v_count; ++v) {
    const auto it = index.find(quantize_key(-mesh.vertices_[v]));
    if (it == index.end()) throw NumericError("icosphere: antipode not found");
    mesh.antipode_[v] = it->second;
  }

  double max_edge = 0.0;
  for (int v = 0; v < v_count; ++v)
    for (int u : mesh.neighbors_[v])
      max_edge = std::max(max_edge,
                          std::acos(std::clamp(mesh.vertices_[v].dot(mesh.vertices_[u]), -1.0, 1.0)));
  mesh.max_edge_deg_ = max_edge * 180.0 / kPi;

  std::uint64_t h = fnv1a("icosphere", 9);
  h = fnv1a(&level, sizeof(level), h);
  for (const Vector3d& v : mesh.vertices_) {
    const double xyz[3] = {v.x(), v.y(), v.z()};
    h = fnv1a(xyz, sizeof(xyz), h);
  }
  mesh.hash_ = h;
  return mesh;
}

const SphericalMesh& SphericalMesh::icosphere(int level) {
  static std::mutex mu;
  static std::map<int, SphericalMesh> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(level);
  if (it == cache.end()) it = cache.emplace(level, build(level)).first;
  return it->second;
}

void SphericalMesh::save_vertices(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  char buf[128];
  for (const Vector3d& v : vertices_) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
}

void SphericalMesh::save_adjacency_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  out << "vertex,neighbor\n";
  for (std::size_t v = 0; v < neighbors_.size(); ++v)
    for (int u : neighbors_[v]) out << v << "," << u << "\n";
}

const MeshBasisOps& mesh_basis_ops(const SphericalMesh& mesh, int degree) {
  static std::mutex mu;
  static std::map<std::pair<std::uint64_t, int>, MeshBasisOps> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_pair(mesh.content_hash(), degree);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const ShBasis basis(degree);
  MeshBasisOps ops;
  ops.synthesis = basis.eval(mesh.vertices());
  const MatrixXd weighted = mesh.weights().asDiagonal() * ops.synthesis;
  const MatrixXd gram = ops.synthesis.transpose() * weighted;
  Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw NumericError("mesh_basis_ops: singular quadrature Gram matrix");
  ops.analysis = llt.solve(weighted.transpose());
  return cache.emplace(key, std::move(ops)).first->second;
}

OdfField project_odf(const SphericalMesh& mesh, const VectorXd& values,
                     const ShBasis& basis) {
  if (values.size() != mesh.vertex_count())
    throw InvalidInput("project_odf: value count does not match mesh");
  if (mesh.vertex_count() < basis.dimension())
    throw InvalidInput("project_odf: mesh too coarse for the basis");
  const MeshBasisOps& ops = mesh_basis_ops(mesh, basis.max_degree());
  OdfField out;
  out.mesh = &mesh;
  out.values = (ops.synthesis * (ops.analysis * values)).cwiseMax(0.0);
  return out;
}

std::vector<Peak> peak_detect(const OdfField& odf, double rel_threshold,
                              double min_sep_deg, int max_peaks) {
  const SphericalMesh& mesh = *odf.mesh;
  if (!odf.values.allFinite()) throw InvalidInput("peak_detect: non-finite field");
  const double max_value = odf.values.maxCoeff();
  if (max_value <= 0.0) return {};
  const double threshold = rel_threshold * max_value;

  struct Candidate {
    Peak peak;
    int vertex;
  };
  std::vector<Candidate> candidates;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const double val = odf.values[v];
    if (val < threshold) continue;
    bool strict_max = true;
    for (int u : mesh.neighbors()[v])
      if (odf.values[u] >= val) {
        strict_max = false;
        break;
      }
    if (!strict_max) continue;
    candidates.push_back({{hemisphere_canonical(mesh.vertices()[v]), val}, v});
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              return a.peak.value != b.peak.value ? a.peak.value > b.peak.value
                                                  : a.vertex < b.vertex;
            });

  // The |dot| test treats +-m as the same axis, so antipodal twins of one
  // lobe collapse here as well.
  const double min_sep_cos = std::cos(min_sep_deg * kPi / 180.0);
  std::vector<Peak> peaks;
  for (const Candidate& c : candidates) {
    bool keep = true;
    for (const Peak& p : peaks)
      if (std::abs(p.orientation.dot(c.peak.orientation)) >= min_sep_cos) {
        keep = false;  // within min_sep of a larger peak
        break;
      }
    if (keep) peaks.push_back(c.peak);
    if (static_cast<int>(peaks.size()) >= max_peaks) break;
  }
  return peaks;
}

}  // namespace fiberinfer
