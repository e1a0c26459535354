#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "netrec/common.hpp"

namespace netrec {

// Flips u so its largest-magnitude entry is positive; ties break at the
// lowest index. Resolves the +-w ambiguity of recovered profiles before
// clustering, so u and -u land in the same cluster.
inline Vector canonicalize_sign(const Vector& u) {
  int best = 0;
  double best_abs = -1.0;
  for (int i = 0; i < u.size(); ++i) {
    double a = std::abs(u[i]);
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  return u[best] < 0.0 ? Vector(-u) : u;
}

// m0 + m1 profile estimates obtained from clustering candidate vectors.
struct ProfileSet {
  std::vector<Vector> vectors;           // unit cluster centers
  std::vector<int> members_per_cluster;  // sizes, sum = #candidates
  double inertia = 0.0;                  // final kMeans objective
};

struct ClusterOptions {
  int restarts = 10;
  int max_iters = 300;
  double tol = 1e-4;  // relative inertia improvement per Lloyd sweep
};

namespace detail {

struct KMeansRun {
  std::vector<Vector> centers;
  std::vector<int> assign;
  double inertia = 0.0;
};

inline int nearest_center(const Vector& x, const std::vector<Vector>& centers) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < static_cast<int>(centers.size()); ++c) {
    double d = (x - centers[c]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

inline KMeansRun lloyd_run(const std::vector<Vector>& pts, int k,
                           const ClusterOptions& opts, std::mt19937_64& gen) {
  const int n = static_cast<int>(pts.size());
  const int dim = static_cast<int>(pts.front().size());
  KMeansRun run;
  run.centers.reserve(k);

  // kMeans++ seeding: first center uniform, then D^2 sampling
  std::uniform_int_distribution<int> uni(0, n - 1);
  run.centers.push_back(pts[uni(gen)]);
  std::vector<double> d2(n);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = (pts[i] - run.centers[nearest_center(pts[i], run.centers)])
                     .squaredNorm();
      d2[i] = d;
      total += d;
    }
    int pick;
    if (total <= 0.0) {
      pick = uni(gen);  // all points coincide with centers
    } else {
      std::uniform_real_distribution<double> ur(0.0, total);
      double target = ur(gen);
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    }
    run.centers.push_back(pts[pick]);
  }

  run.assign.assign(n, 0);
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iters; ++it) {
    // assignment
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      run.assign[i] = nearest_center(pts[i], run.centers);
      inertia += (pts[i] - run.centers[run.assign[i]]).squaredNorm();
    }
    run.inertia = inertia;
    // update
    std::vector<Vector> sums(k, Vector::Zero(dim));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums[run.assign[i]] += pts[i];
      ++counts[run.assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        run.centers[c] = sums[c] / counts[c];
      } else {
        // empty cluster: take the point farthest from its center
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          double d = (pts[i] - run.centers[run.assign[i]]).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        run.centers[c] = pts[far];
      }
    }
    if (prev_inertia - inertia <= opts.tol * inertia) break;
    prev_inertia = inertia;
  }
  // final assignment under the updated centers
  double inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    run.assign[i] = nearest_center(pts[i], run.centers);
    inertia += (pts[i] - run.centers[run.assign[i]]).squaredNorm();
  }
  run.inertia = inertia;
  return run;
}

}  // namespace detail

// kMeans++ with Lloyd iterations over sign-canonicalized candidates;
// the best of `restarts` runs by inertia wins (ties keep the earliest run)
// and centers are projected back onto the unit sphere.
inline ProfileSet cluster_profiles(const std::vector<Vector>& candidates,
                                   int k, std::uint64_t seed,
                                   const ClusterOptions& opts = {}) {
  const int n = static_cast<int>(candidates.size());
  if (n < k)
    throw TooFewCandidates("need at least k candidates to form k clusters");
  std::vector<Vector> pts;
  pts.reserve(n);
  for (const auto& c : candidates) pts.push_back(canonicalize_sign(c));
  // canonical input order makes the result independent of how the caller
  // ordered the candidates
  std::sort(pts.begin(), pts.end(), [](const Vector& a, const Vector& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(),
                                        b.data(), b.data() + b.size());
  });

  detail::KMeansRun best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int rs = 0; rs < opts.restarts; ++rs) {
    auto gen = rng::stream(seed, rng::kCluster, rs);
    auto run = detail::lloyd_run(pts, k, opts, gen);
    if (run.inertia < best.inertia) best = run;
  }

  ProfileSet out;
  out.inertia = best.inertia;
  out.members_per_cluster.assign(k, 0);
  for (int i = 0; i < n; ++i) ++out.members_per_cluster[best.assign[i]];
  out.vectors.reserve(k);
  for (int c = 0; c < k; ++c) {
    Vector v = best.centers[c];
    double nrm = v.norm();
    out.vectors.push_back(nrm > 1e-300 ? Vector(v / nrm) : v);
  }
  return out;
}

inline void to_json(nlohmann::json& j, const ProfileSet& p) {
  nlohmann::json vecs = nlohmann::json::array();
  for (const auto& v : p.vectors)
    vecs.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  j = nlohmann::json{{"vectors", vecs},
                     {"members_per_cluster", p.members_per_cluster},
                     {"inertia", p.inertia}};
}

inline ProfileSet profile_set_from_json(const nlohmann::json& j) {
  ProfileSet p;
  for (const auto& item : j.at("vectors")) {
    auto data = item.get<std::vector<double>>();
    p.vectors.push_back(Eigen::Map<const Vector>(data.data(), data.size()));
  }
  p.members_per_cluster = j.at("members_per_cluster").get<std::vector<int>>();
  p.inertia = j.at("inertia").get<double>();
  return p;
}

}  // namespace netrec
