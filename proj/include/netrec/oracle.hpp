#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>

#include "netrec/common.hpp"
#include "netrec/network.hpp"

namespace netrec {

// Query-only access to a scalar function. The counter tracks every point
// evaluation and is safe for concurrent queries.
class QueryOracle {
 public:
  using Fn = std::function<double(const Vector&)>;

  QueryOracle(int dim, Fn eval) : dim_(dim), eval_(std::move(eval)) {}

  // Wraps a network by value; the oracle owns its copy.
  explicit QueryOracle(const TwoLayerNetwork& net)
      : dim_(net.d()),
        eval_([n = std::make_shared<TwoLayerNetwork>(net)](const Vector& x) {
          return n->evaluate(x);
        }) {}

  double operator()(const Vector& x) const {
    count_.fetch_add(1, std::memory_order_relaxed);
    return eval_(x);
  }

  int dim() const { return dim_; }
  std::uint64_t query_count() const {
    return count_.load(std::memory_order_relaxed);
  }
  void reset_count() const { count_.store(0, std::memory_order_relaxed); }

 private:
  int dim_;
  Fn eval_;
  mutable std::atomic<std::uint64_t> count_{0};
};

struct FDConfig {
  double epsilon = 1e-5;
};

// Forward differences (f(x + eps e_i) - f(x)) / eps; exactly d + 1 queries.
inline Vector fd_gradient(const QueryOracle& f, const Vector& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  const int d = static_cast<int>(x.size());
  const double fx = f(x);
  Vector g(d);
  Vector xe = x;
  for (int i = 0; i < d; ++i) {
    xe[i] = x[i] + eps;
    g[i] = (f(xe) - fx) / eps;
    xe[i] = x[i];
  }
  return g;
}

// Second order finite difference approximation of the Hessian,
//   (f(x+eps e_i+eps e_j) - f(x+eps e_i) - f(x+eps e_j) + f(x)) / eps^2.
// Shared evaluations of f(x) and f(x + eps e_i) are reused, so one call
// consumes exactly 1 + d + d(d+1)/2 queries. The result is symmetric bit
// for bit since entry (i,j) is computed once and mirrored.
inline Matrix fd_hessian(const QueryOracle& f, const Vector& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  const int d = static_cast<int>(x.size());
  const double fx = f(x);
  Vector fi(d);
  Vector xe = x;
  for (int i = 0; i < d; ++i) {
    xe[i] = x[i] + eps;
    fi[i] = f(xe);
    xe[i] = x[i];
  }
  Matrix h(d, d);
  const double inv = 1.0 / (eps * eps);
  Vector xij = x;
  for (int i = 0; i < d; ++i) {
    xij[i] = x[i] + eps;
    for (int j = i; j < d; ++j) {
      xij[j] += eps;
      double fij = f(xij);
      xij[j] -= eps;
      double v = (fij - fi[i] - fi[j] + fx) * inv;
      h(i, j) = v;
      h(j, i) = v;
    }
    xij[i] = x[i];
  }
  return h;
}

// Central differences; test oracle only, not used in the pipeline path.
inline Vector central_gradient(const QueryOracle& f, const Vector& x,
                               double h) {
  const int d = static_cast<int>(x.size());
  Vector g(d);
  Vector xp = x, xm = x;
  for (int i = 0; i < d; ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

// Column-stacked vectorization. Drifting inputs are symmetrized first;
// |vec(M)|_2 = |M|_F and unvec is the exact inverse.
inline Vector vec_sym(const Matrix& m) {
  const Matrix* src = &m;
  Matrix sym;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    sym = 0.5 * (m + m.transpose());
    src = &sym;
  }
  return Eigen::Map<const Vector>(src->data(), src->size());
}

inline Matrix unvec_sym(const Vector& v) {
  const auto n = v.size();
  const int d = static_cast<int>(std::lround(std::sqrt(double(n))));
  if (static_cast<Eigen::Index>(d) * d != n)
    throw std::invalid_argument("vector length is not a perfect square");
  Matrix m = Eigen::Map<const Matrix>(v.data(), d, d);
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    m = 0.5 * (m + m.transpose());
  return m;
}

}  // namespace netrec
