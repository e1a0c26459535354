#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "netrec/cluster.hpp"
#include "netrec/common.hpp"
#include "netrec/network.hpp"
#include "netrec/oracle.hpp"

namespace netrec {

// Grid of scale factors t_k along a profile direction. The defaults match
// t_k = -20 + k for k in [40] with finite-difference step 1e-5.
struct TrajectoryConfig {
  std::vector<double> t_grid;
  double eps = 1e-5;

  static TrajectoryConfig defaults() {
    TrajectoryConfig cfg;
    cfg.t_grid.reserve(40);
    for (int k = 1; k <= 40; ++k) cfg.t_grid.push_back(-20.0 + k);
    return cfg;
  }
};

// Gradient-decay energy sum_k |grad f(t_k w)|^2 estimated by forward
// differences; consumes |grid| * (d + 1) queries. First-layer directions
// keep a nonvanishing gradient for large |t|, entangled directions do not.
inline double trajectory_energy(const QueryOracle& f, const Vector& w,
                                const TrajectoryConfig& cfg) {
  if (cfg.t_grid.empty()) throw std::invalid_argument("empty trajectory grid");
  double energy = 0.0;
  for (double t : cfg.t_grid)
    energy += fd_gradient(f, Vector(t * w), cfg.eps).squaredNorm();
  return energy;
}

// Partition of the m0 + m1 profiles into first- and second-layer indices.
struct LayerAssignment {
  std::vector<int> layer1;  // indices into the profile set, size m0
  std::vector<int> layer2;  // size m1
  std::vector<double> energies;
};

// The m0 profiles with the largest trajectory energies go to layer 1;
// ties keep the lower index first.
inline LayerAssignment assign_layers(const std::vector<double>& energies,
                                     int m0) {
  const int m = static_cast<int>(energies.size());
  if (m0 < 0 || m0 > m) throw std::invalid_argument("bad layer-1 count");
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return energies[a] > energies[b];
  });
  LayerAssignment out;
  out.energies = energies;
  out.layer1.assign(order.begin(), order.begin() + m0);
  out.layer2.assign(order.begin() + m0, order.end());
  std::sort(out.layer1.begin(), out.layer1.end());
  std::sort(out.layer2.begin(), out.layer2.end());
  return out;
}

// Ground-truth labels for evaluation: profile j gets label 1 when the
// closest vector among {+-a_i, +-v_l} is a first-layer weight, else 2.
inline std::vector<int> truth_labels(const std::vector<Vector>& profiles,
                                     const TwoLayerNetwork& net) {
  Matrix v = net.entangled_weights();
  std::vector<int> labels;
  labels.reserve(profiles.size());
  for (const auto& u : profiles) {
    double best = std::numeric_limits<double>::infinity();
    int label = 1;
    for (int i = 0; i < net.m0(); ++i) {
      double dp = (u - net.a().col(i)).squaredNorm();
      double dm = (u + net.a().col(i)).squaredNorm();
      double d = std::min(dp, dm);
      if (d < best) {
        best = d;
        label = 1;
      }
    }
    for (int l = 0; l < net.m1(); ++l) {
      double dp = (u - v.col(l)).squaredNorm();
      double dm = (u + v.col(l)).squaredNorm();
      double d = std::min(dp, dm);
      if (d < best) {
        best = d;
        label = 2;
      }
    }
    labels.push_back(label);
  }
  return labels;
}

// Success rates: fraction of true layer-1 (layer-2) profiles that were
// assigned to layer 1 (layer 2).
inline std::pair<double, double> success_rates(const LayerAssignment& asg,
                                               const std::vector<int>& labels,
                                               int m0, int m1) {
  int hit1 = 0, hit2 = 0;
  for (int j : asg.layer1)
    if (labels[j] == 1) ++hit1;
  for (int j : asg.layer2)
    if (labels[j] == 2) ++hit2;
  return {static_cast<double>(hit1) / m0, static_cast<double>(hit2) / m1};
}

inline void to_json(nlohmann::json& j, const LayerAssignment& a) {
  j = nlohmann::json{{"layer1", a.layer1},
                     {"layer2", a.layer2},
                     {"energies", a.energies}};
}

}  // namespace netrec
