#include "fiberinfer/scheme.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "fiberinfer/rng.hpp"

namespace fiberinfer {

namespace {

constexpr double kB0Tolerance = 1e-6;  // ms/um^2; anything below is a b0 line

void validate_shells(const std::vector<Shell>& shells) {
  if (shells.empty()) throw InvalidInput("scheme: no shells");
  for (std::size_t l = 0; l < shells.size(); ++l) {
    const Shell& s = shells[l];
    if (!(s.b >= 0.0)) throw InvalidInput("scheme: negative b-value");
    if (s.directions.empty()) throw InvalidInput("scheme: empty shell");
    for (const Vector3d& d : s.directions) {
      if (std::abs(d.norm() - 1.0) > 1e-12)
        throw InvalidInput("scheme: direction is not unit length");
    }
    if (l > 0 && !(shells[l - 1].b < s.b))
      throw InvalidInput("scheme: shells must be strictly ascending in b");
  }
}

}  // namespace

AcquisitionScheme AcquisitionScheme::from_shells(std::vector<Shell> shells) {
  std::sort(shells.begin(), shells.end(),
            [](const Shell& a, const Shell& b) { return a.b < b.b; });
  for (Shell& s : shells)
    for (Vector3d& d : s.directions)
      if (d.norm() > 0.0) d.normalize();
  validate_shells(shells);
  AcquisitionScheme out;
  out.shells_ = std::move(shells);
  return out;
}

AcquisitionScheme AcquisitionScheme::parse_gradient_table(std::istream& in,
                                                          const std::string& origin) {
  // Group lines by b-value (converted to ms/um^2); b0 lines collapse together.
  std::map<long long, Shell> groups;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    double gx, gy, gz, b_smm2;
    if (!(ss >> gx >> gy >> gz >> b_smm2)) {
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      throw InvalidInput("gradient table " + origin + ": bad line " +
                         std::to_string(lineno));
    }
    const double b = b_smm2 * 1e-3;  // s/mm^2 -> ms/um^2
    if (b < -kB0Tolerance)
      throw InvalidInput("gradient table: negative b at line " +
                         std::to_string(lineno));
    const bool is_b0 = b < kB0Tolerance;
    const long long key = is_b0 ? 0 : std::llround(b * 1e6);
    Shell& sh = groups[key];
    sh.b = is_b0 ? 0.0 : b;
    Vector3d g(gx, gy, gz);
    if (g.norm() == 0.0) {
      if (!is_b0)
        throw InvalidInput("gradient table: zero gradient with b > 0 at line " +
                           std::to_string(lineno));
      g = Vector3d(0, 0, 1);
    }
    sh.directions.push_back(g.normalized());
  }
  std::vector<Shell> shells;
  shells.reserve(groups.size());
  for (auto& [key, sh] : groups) shells.push_back(std::move(sh));
  return from_shells(std::move(shells));
}

AcquisitionScheme AcquisitionScheme::load_gradient_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open gradient table: " + path);
  return parse_gradient_table(in, path);
}

std::string AcquisitionScheme::gradient_table_text() const {
  std::ostringstream out;
  char buf[160];
  for (const Shell& sh : shells_) {
    for (const Vector3d& d : sh.directions) {
      std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", d.x(), d.y(),
                    d.z(), sh.b * 1e3);
      out << buf;
    }
  }
  return out.str();
}

void AcquisitionScheme::save_gradient_table(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write gradient table: " + path);
  out << gradient_table_text();
}

std::vector<int> AcquisitionScheme::diffusion_shell_indices() const {
  std::vector<int> idx;
  for (int l = 0; l < shell_count(); ++l)
    if (shells_[l].b > kB0Tolerance) idx.push_back(l);
  return idx;
}

int AcquisitionScheme::total_measurements() const {
  int n = 0;
  for (const Shell& s : shells_) n += s.count();
  return n;
}

std::uint64_t AcquisitionScheme::content_hash() const {
  std::uint64_t h = fnv1a("scheme", 6);
  for (const Shell& s : shells_) {
    h = fnv1a(&s.b, sizeof(double), h);
    for (const Vector3d& d : s.directions) {
      const double xyz[3] = {d.x(), d.y(), d.z()};
      h = fnv1a(xyz, sizeof(xyz), h);
    }
  }
  return h;
}

std::vector<Vector3d> repulsion_directions(int count, std::uint64_t seed,
                                           int iterations) {
  if (count < 1) throw InvalidInput("repulsion_directions: count < 1");
  RandomStream rng(seed);
  std::vector<Vector3d> pts(count);
  for (Vector3d& p : pts) p = rng.unit_vector();
  const double step = 0.08 / static_cast<double>(count);
  std::vector<Vector3d> force(count);
  for (int it = 0; it < iterations; ++it) {
    for (Vector3d& f : force) f.setZero();
    for (int i = 0; i < count; ++i) {
      for (int j = i + 1; j < count; ++j) {
        // Antipodally symmetric Coulomb force: points repel both the other
        // point and its mirror image.
        Vector3d d = pts[i] - pts[j];
        double r3 = std::pow(std::max(d.norm(), 1e-6), 3);
        force[i] += d / r3;
        force[j] -= d / r3;
        d = pts[i] + pts[j];
        r3 = std::pow(std::max(d.norm(), 1e-6), 3);
        force[i] += d / r3;
        force[j] += d / r3;
      }
    }
    for (int i = 0; i < count; ++i) {
      const Vector3d tangential = force[i] - pts[i].dot(force[i]) * pts[i];
      pts[i] = (pts[i] + step * tangential).normalized();
    }
  }
  return pts;
}

const AcquisitionScheme& AcquisitionScheme::builtin_default() {
  static const AcquisitionScheme scheme = [] {
    Shell s1, s2;
    s1.b = 1.0;
    s1.directions = repulsion_directions(60, 20240101ull);
    s2.b = 3.0;
    s2.directions = repulsion_directions(60, 20240102ull);
    return from_shells({std::move(s1), std::move(s2)});
  }();
  return scheme;
}

}  // namespace fiberinfer
