#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fiberinfer/common.hpp"

namespace fiberinfer {

/// One b-shell: a b-value (stored in ms/um^2; 1000 s/mm^2 == 1 ms/um^2) and
/// its unit gradient directions.
struct Shell {
  double b = 0.0;
  std::vector<Vector3d> directions;
  int count() const { return static_cast<int>(directions.size()); }
};

/// Multi-shell sampling design. Shells are kept sorted ascending by b-value;
/// b = 0 measurements are grouped into a single leading shell.
class AcquisitionScheme {
 public:
  /// Validates norms (1 +- 1e-12 after normalization), b >= 0, counts >= 1.
  static AcquisitionScheme from_shells(std::vector<Shell> shells);

  /// Plain-text gradient table: one line per measurement, "gx gy gz b"
  /// with b in s/mm^2. b = 0 lines may carry a zero gradient vector.
  static AcquisitionScheme load_gradient_table(const std::string& path);
  static AcquisitionScheme parse_gradient_table(std::istream& in,
                                                const std::string& origin);
  void save_gradient_table(const std::string& path) const;
  std::string gradient_table_text() const;

  /// Built-in HCP-like two-shell design: b = 1 and 3 ms/um^2
  /// (1000/3000 s/mm^2), 60 electrostatically spread directions per shell.
  static const AcquisitionScheme& builtin_default();

  const std::vector<Shell>& shells() const { return shells_; }
  int shell_count() const { return static_cast<int>(shells_.size()); }

  /// Shells with b > 0 (the ones that carry orientation information).
  std::vector<int> diffusion_shell_indices() const;

  int total_measurements() const;
  std::uint64_t content_hash() const;

 private:
  std::vector<Shell> shells_;
};

/// Electrostatic repulsion point set on the sphere: minimizes the antipodally
/// symmetrized Coulomb energy. Deterministic for a fixed seed.
std::vector<Vector3d> repulsion_directions(int count, std::uint64_t seed,
                                           int iterations = 400);

}  // namespace fiberinfer
