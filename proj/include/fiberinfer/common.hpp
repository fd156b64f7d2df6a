#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fiberinfer {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kFourPi = 4.0 * kPi;

/// Input violated a documented precondition (CLI exit code 2/3).
class InvalidInput : public std::runtime_error {
 public:
  explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

/// A numerical procedure failed to converge or produced non-finite values
/// (CLI exit code 4).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Deterministic parallel map over [0, count): results must be written to
/// per-index slots by `fn`; any reduction happens after the join, in index
/// order. `threads <= 1` runs inline.
void parallel_for(std::int64_t count, int threads,
                  const std::function<void(std::int64_t)>& fn);

int default_thread_count();

/// FNV-1a over raw bytes, used for manifest hash chains.
std::uint64_t fnv1a(const void* data, std::size_t len,
                    std::uint64_t seed = 1469598103934665603ull);

std::string hash_hex(std::uint64_t h);

}  // namespace fiberinfer
