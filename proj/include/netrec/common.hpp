#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace netrec {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

struct DegenerateEntangledWeight : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RankDeficient : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotRieszBasis : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotAFrame : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonpositiveLeadingEigenvalue : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PreconditionViolated : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooFewCandidates : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularAHat : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Diverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG streams
//
// Every random draw in the library comes from a stream keyed by
// (seed, stage, index). Workers pull streams by index, so results do not
// depend on thread count or scheduling.
// ---------------------------------------------------------------------------

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stage tags keep streams of different pipeline stages disjoint.
enum Stage : std::uint64_t {
  kWeights = 1,
  kBiases = 2,
  kHessianSample = 3,
  kRestart = 4,
  kCluster = 5,
  kRefitSample = 6,
  kRefitInit = 7,
  kTestSample = 8,
  kGradientSample = 9,
  kMisc = 10,
};

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t stage,
                              std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(stage));
  s = splitmix64(s ^ splitmix64(index));
  return std::mt19937_64(s);
}

inline Vector gaussian_vector(std::mt19937_64& gen, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(gen);
  return v;
}

inline Matrix gaussian_matrix(std::mt19937_64& gen, int rows, int cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // column-major fill, matching storage order
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = normal(gen);
  return m;
}

inline Vector unit_sphere(std::mt19937_64& gen, int n) {
  Vector v = gaussian_vector(gen, n);
  double nrm = v.norm();
  while (nrm < 1e-300) {
    v = gaussian_vector(gen, n);
    nrm = v.norm();
  }
  return v / nrm;
}

}  // namespace rng

// ---------------------------------------------------------------------------
// Index-based parallel loop. Results must be written to per-index slots;
// with that convention the outcome is independent of the worker count.
// ---------------------------------------------------------------------------

template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn, int num_workers = 0) {
  if (n <= 0) return;
  int workers = num_workers > 0
                    ? num_workers
                    : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  if (workers == 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::int64_t i = next.fetch_add(1);
      if (i >= n) break;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int spawn = static_cast<int>(std::min<std::int64_t>(workers, n));
  pool.reserve(spawn - 1);
  for (int t = 0; t < spawn - 1; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace netrec
