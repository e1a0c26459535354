#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "netrec/common.hpp"
#include "netrec/oracle.hpp"
#include "netrec/subspace.hpp"

namespace netrec {

// Eigenvalue of largest magnitude with its eigenvector. When the magnitude
// winner is negative the caller should iterate on -M instead; the flag
// records that convention.
struct TopEig {
  double lambda;  // signed eigenvalue of largest magnitude
  Vector u;
  bool negate;

  double effective() const { return negate ? -lambda : lambda; }
};

inline TopEig top_eigenpair(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  const auto n = m.rows();
  double lo = eig.eigenvalues()[0];
  double hi = eig.eigenvalues()[n - 1];
  TopEig out;
  if (std::abs(lo) > std::abs(hi)) {
    out.lambda = lo;
    out.u = eig.eigenvectors().col(0);
    out.negate = true;
  } else {
    out.lambda = hi;
    out.u = eig.eigenvectors().col(n - 1);
    out.negate = false;
  }
  return out;
}

// State of the spectral-ascent iteration: a unit-Frobenius matrix in the
// subspace together with its leading eigenpair.
struct IterState {
  Matrix m;
  double lambda1 = 0.0;  // largest eigenvalue (sign convention applied)
  double lambda2 = 0.0;
  Vector u1;
  int iter = 0;
};

enum class CandidateStatus { NearRank1, Spurious, MaxIters };

inline const char* to_string(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::NearRank1: return "near_rank1";
    case CandidateStatus::Spurious: return "spurious";
    case CandidateStatus::MaxIters: return "max_iters";
  }
  return "?";
}

// Recovered profile candidate; u is defined up to sign.
struct Candidate {
  Vector u;
  double lambda1 = 0.0;
  double spectral_gap = 0.0;  // lambda1 - lambda2
  CandidateStatus status = CandidateStatus::MaxIters;
  int iters = 0;
  bool converged = false;           // stopping rule fired before max_iters
  double fixed_point_residual = 0;  // |lambda1 - |P(u1 u1^T)|_F|
  std::vector<double> lambda_trace;
};

namespace detail {

inline IterState eval_state(const SymSubspace& sub, const Matrix& m,
                            int iter) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  const auto n = m.rows();
  IterState st;
  st.m = m;
  st.lambda1 = eig.eigenvalues()[n - 1];
  st.lambda2 = n > 1 ? eig.eigenvalues()[n - 2] : st.lambda1;
  st.u1 = eig.eigenvectors().col(n - 1);
  st.iter = iter;
  (void)sub;
  return st;
}

// One application of F_gamma. Projects the whole update so iterates stay in
// the subspace despite rounding. Checks the closed form of the denominator,
//   |P(M + g u u^T)|_F^2 = 1 + 2 g l1 + g^2 |P(u u^T)|_F^2.
inline IterState step(const SymSubspace& sub, const IterState& st,
                      double gamma, double* identity_gap = nullptr) {
  if (!(st.lambda1 > 0.0))
    throw NonpositiveLeadingEigenvalue(
        "leading eigenvalue must be positive for the ascent step");
  Vector pu = sub.project_vec(vec_sym(Matrix(st.u1 * st.u1.transpose())));
  Vector p = sub.project_vec(vec_sym(st.m)) + gamma * pu;
  double denom = p.norm();
  if (identity_gap) {
    double predicted = 1.0 + 2.0 * gamma * st.lambda1 +
                       gamma * gamma * pu.squaredNorm();
    *identity_gap = std::abs(denom * denom - predicted);
  }
  return eval_state(sub, unvec_sym(Vector(p / denom)), st.iter + 1);
}

}  // namespace detail

// M' = P_What(M + gamma u1 u1^T) / |P_What(M + gamma u1 u1^T)|_F
inline Matrix f_gamma_step(const SymSubspace& sub, const Matrix& m,
                           double gamma) {
  auto st = detail::eval_state(sub, m, 0);
  return detail::step(sub, st, gamma).m;
}

struct RecoverOptions {
  double gamma = 2.0;
  double tol = 1e-5;  // stop once the lambda1 increase falls below this
  int max_iters = 200;
  double rank1_threshold = 1.0 / std::sqrt(2.0);
  double spurious_threshold = 0.3;
  int max_restarts = 5;
  bool record_trace = false;
};

// One run of the spectral-ascent recovery: random start in the subspace,
// sign fix so the spectral norm is attained by a positive eigenvalue, then
// iterate F_gamma until the eigenvalue gain drops below tol.
inline Candidate recover_candidate(const SymSubspace& sub,
                                   const RecoverOptions& opts,
                                   std::uint64_t seed) {
  const int r = sub.rank();
  if (r < 1) throw std::invalid_argument("subspace must have positive rank");
  for (int attempt = 0;; ++attempt) {
    try {
      auto gen = rng::stream(seed, rng::kRestart, attempt);
      Vector coeff = rng::gaussian_vector(gen, r);
      Vector v = sub.basis * coeff;
      double nrm = v.norm();
      if (nrm < 1e-300) throw NonpositiveLeadingEigenvalue("zero start");
      Matrix m0 = unvec_sym(Vector(v / nrm));
      auto te = top_eigenpair(m0);
      if (te.negate) m0 = -m0;
      IterState st = detail::eval_state(sub, m0, 0);

      Candidate cand;
      if (opts.record_trace) cand.lambda_trace.push_back(st.lambda1);
      cand.converged = false;
      int iter = 0;
      for (; iter < opts.max_iters; ++iter) {
        IterState next = detail::step(sub, st, opts.gamma);
        if (opts.record_trace) cand.lambda_trace.push_back(next.lambda1);
        double gain = next.lambda1 - st.lambda1;
        st = next;
        if (gain < opts.tol) {
          cand.converged = true;
          ++iter;
          break;
        }
      }
      cand.u = st.u1;
      cand.lambda1 = st.lambda1;
      cand.spectral_gap = st.lambda1 - st.lambda2;
      cand.iters = iter;
      Vector pu = sub.project_vec(vec_sym(Matrix(st.u1 * st.u1.transpose())));
      cand.fixed_point_residual = std::abs(st.lambda1 - pu.norm());
      if (st.lambda1 >= opts.rank1_threshold)
        cand.status = CandidateStatus::NearRank1;
      else if (st.lambda1 <= opts.spurious_threshold)
        cand.status = CandidateStatus::Spurious;
      else
        cand.status = CandidateStatus::MaxIters;
      return cand;
    } catch (const NonpositiveLeadingEigenvalue&) {
      if (attempt + 1 >= opts.max_restarts) throw;
    }
  }
}

// Right-hand side of the recovery estimate,
//   sqrt(8) (c_r^{-1/2} sqrt(nu) + nu + 2 delta) / (lambda1 - lambda2),
// without precondition checks.
inline double recovery_bound(double lambda1, double lambda2, double c_r,
                             double nu, double delta) {
  return std::sqrt(8.0) * (std::sqrt(nu) / std::sqrt(c_r) + nu + 2.0 * delta) /
         (lambda1 - lambda2);
}

// Recovery certificate: validates the hypotheses and returns the error
// bound the measured distance must satisfy.
inline double certify_recovery(double lambda1, double lambda2, double c_r,
                               double nu, double delta) {
  if (!(lambda1 > std::max(2.0 * delta, lambda2)))
    throw PreconditionViolated("need lambda1 > max(2 delta, lambda2)");
  if (!(std::max(delta, nu) <= 0.25))
    throw PreconditionViolated("need max(delta, nu) <= 1/4");
  return recovery_bound(lambda1, lambda2, c_r, nu, delta);
}

// Ascent-gap constant Theta = (C_W / c_W)^{1/2} sum_{lambda_j > 0}
// lambda_j |P_W(u_j u_j^T)|_F; diagnostic for the per-step gain.
inline double gap_constant(const SymSubspace& sub, const Matrix& m,
                           const std::vector<Vector>& profiles) {
  const int k = static_cast<int>(profiles.size());
  if (k == 0) throw std::invalid_argument("no profiles");
  Matrix gram(k, k);
  for (int j = 0; j < k; ++j)
    for (int l = j; l < k; ++l) {
      double ip = profiles[j].dot(profiles[l]);
      gram(j, l) = gram(l, j) = ip * ip;
    }
  Eigen::SelfAdjointEigenSolver<Matrix> geig(gram);
  double c_w = geig.eigenvalues().minCoeff();
  double c_big_w = geig.eigenvalues().maxCoeff();
  if (c_w <= 1e-10)
    throw NotAFrame("rank-1 tensor system has a singular Gram matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  double sum = 0.0;
  const auto n = m.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    double lam = eig.eigenvalues()[j];
    if (lam <= 0.0) continue;
    Vector u = eig.eigenvectors().col(j);
    Vector pu = sub.project_vec(vec_sym(Matrix(u * u.transpose())));
    sum += lam * pu.norm();
  }
  return std::sqrt(c_big_w / c_w) * sum;
}

}  // namespace netrec
