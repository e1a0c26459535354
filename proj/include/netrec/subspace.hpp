#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "netrec/common.hpp"
#include "netrec/network.hpp"
#include "netrec/oracle.hpp"

namespace netrec {

enum class SubspaceOrigin { Exact, Estimated };

// Orthonormal basis of a subspace of vectorized symmetric d x d matrices.
struct SymSubspace {
  int d = 0;             // matrix dimension; ambient dimension is d^2
  Matrix basis;          // d^2 x r, U^T U = I
  SubspaceOrigin origin = SubspaceOrigin::Estimated;

  int rank() const { return static_cast<int>(basis.cols()); }
  int dim_ambient() const { return d * d; }

  Vector project_vec(const Vector& v) const {
    return basis * (basis.transpose() * v);
  }

  // unvec(U U^T vec(M)); idempotent and non-expansive in Frobenius norm
  Matrix project(const Matrix& m) const {
    return unvec_sym(project_vec(vec_sym(m)));
  }
};

struct SampleDistribution {
  enum class Kind { UnitSphere, ScaledSphere };
  Kind kind = Kind::ScaledSphere;
  double rho = 1.0;  // radius for ScaledSphere

  Vector sample(std::mt19937_64& gen, int d) const {
    Vector x = rng::unit_sphere(gen, d);
    if (kind == Kind::ScaledSphere) x *= rho;
    return x;
  }

  static SampleDistribution unit_sphere() {
    return {Kind::UnitSphere, 1.0};
  }
  static SampleDistribution scaled_sphere(double rho) {
    return {Kind::ScaledSphere, rho};
  }
};

namespace detail {

struct SpectralBasis {
  Matrix u;          // columns = top left singular vectors
  Vector sigma;      // all singular values, descending
};

// Left singular basis of a (rows x n) sample matrix, taking the smaller of
// the covariance or Gram route so memory stays O(min(rows, n)^2). The
// requested rank is clamped to the available spectrum; callers check the
// singular values before relying on the basis width.
inline SpectralBasis left_singular_basis(const Matrix& samples, int rank) {
  const auto rows = samples.rows();
  const auto n = samples.cols();
  const auto k = std::min(rows, n);
  const int r = static_cast<int>(std::min<Eigen::Index>(rank, k));
  SpectralBasis out;
  out.sigma.resize(k);
  if (rows <= n) {
    Matrix cov = samples * samples.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    // eigenvalues ascending; reverse to descending
    for (Eigen::Index i = 0; i < k; ++i)
      out.sigma[i] = std::sqrt(std::max(0.0, eig.eigenvalues()[k - 1 - i]));
    out.u.resize(rows, r);
    for (int i = 0; i < r; ++i) out.u.col(i) = eig.eigenvectors().col(k - 1 - i);
  } else {
    Matrix gram = samples.transpose() * samples;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    for (Eigen::Index i = 0; i < k; ++i)
      out.sigma[i] = std::sqrt(std::max(0.0, eig.eigenvalues()[k - 1 - i]));
    out.u.resize(rows, r);
    for (int i = 0; i < r; ++i) {
      double s = out.sigma[i];
      if (s > 1e-300)
        out.u.col(i) = samples * eig.eigenvectors().col(k - 1 - i) / s;
      else
        out.u.col(i).setZero();
    }
    if (r > 0) {
      // clean up orthonormality lost to the Gram round trip
      Eigen::HouseholderQR<Matrix> qr(out.u);
      out.u = qr.householderQ() * Matrix::Identity(rows, r);
    }
  }
  return out;
}

inline double sigma_at(const SpectralBasis& sb, int i) {
  return i < sb.sigma.size() ? sb.sigma[i] : 0.0;
}

}  // namespace detail

// Orthonormal basis (d x m0) of the active subspace: PCA of forward-
// difference gradients at uniform sphere points.
inline Matrix active_subspace_basis(const QueryOracle& f, int d, int m0,
                                    int m_x, double eps, std::uint64_t seed,
                                    int num_workers = 0) {
  if (m_x < m0) throw std::invalid_argument("need m_x >= m0 samples");
  Matrix grads(d, m_x);
  parallel_for(
      m_x,
      [&](std::int64_t i) {
        auto gen = rng::stream(seed, rng::kGradientSample, i);
        Vector x = rng::unit_sphere(gen, d);
        grads.col(i) = fd_gradient(f, x, eps);
      },
      num_workers);
  auto sb = detail::left_singular_basis(grads, m0);
  if (detail::sigma_at(sb, m0 - 1) < 1e-10)
    throw RankDeficient("gradient matrix does not reach rank m0");
  return sb.u;
}

// Projector P = U U^T onto the estimated span of the first-layer weights.
inline Matrix active_subspace(const QueryOracle& f, int d, int m0, int m_x,
                              double eps, std::uint64_t seed) {
  Matrix u = active_subspace_basis(f, d, m0, m_x, eps, seed);
  return u * u.transpose();
}

// PCA approximation of the span of weight tensors from finite-difference
// Hessians sampled at m_x points of the given distribution. When requested,
// the singular values of the sample matrix are reported; the (m0+m1)-th one
// squared over m_x is the empirical spectral-condition value alpha.
inline SymSubspace approximate_w(const QueryOracle& f, int m0, int m1, int m_x,
                                 double eps, const SampleDistribution& dist,
                                 std::uint64_t seed, int num_workers = 0,
                                 Vector* singular_values = nullptr) {
  const int d = f.dim();
  const int r = m0 + m1;
  if (m_x < r) throw std::invalid_argument("need m_x >= m0 + m1 samples");
  Matrix samples(d * d, m_x);
  parallel_for(
      m_x,
      [&](std::int64_t i) {
        auto gen = rng::stream(seed, rng::kHessianSample, i);
        Vector x = dist.sample(gen, d);
        samples.col(i) = vec_sym(fd_hessian(f, x, eps));
      },
      num_workers);
  auto sb = detail::left_singular_basis(samples, r);
  if (singular_values) *singular_values = sb.sigma;
  if (detail::sigma_at(sb, r - 1) < 1e-10)
    throw RankDeficient("Hessian samples do not reach rank m0 + m1");
  SymSubspace sub;
  sub.d = d;
  sub.basis = sb.u;
  sub.origin = SubspaceOrigin::Estimated;
  return sub;
}

// PCA basis of given symmetric matrices (top `rank` left singular vectors
// of the stacked vectorizations).
inline SymSubspace subspace_from_samples(const std::vector<Matrix>& mats,
                                         int rank) {
  if (mats.empty()) throw std::invalid_argument("no samples");
  const int d = static_cast<int>(mats.front().rows());
  Matrix samples(d * d, mats.size());
  for (size_t i = 0; i < mats.size(); ++i)
    samples.col(static_cast<Eigen::Index>(i)) = vec_sym(mats[i]);
  auto sb = detail::left_singular_basis(samples, rank);
  if (detail::sigma_at(sb, rank - 1) < 1e-10)
    throw RankDeficient("samples do not reach the requested rank");
  SymSubspace sub;
  sub.d = d;
  sub.basis = sb.u;
  sub.origin = SubspaceOrigin::Estimated;
  return sub;
}

// Orthonormal span of {vec(w_j w_j^T)} for given unit profiles.
inline SymSubspace span_of_tensors(const std::vector<Vector>& profiles,
                                   SubspaceOrigin origin =
                                       SubspaceOrigin::Exact) {
  if (profiles.empty()) throw std::invalid_argument("no profiles");
  const int d = static_cast<int>(profiles.front().size());
  const int m = static_cast<int>(profiles.size());
  Matrix stack(d * d, m);
  for (int j = 0; j < m; ++j)
    stack.col(j) = vec_sym(Matrix(profiles[j] * profiles[j].transpose()));
  Eigen::JacobiSVD<Matrix> svd(stack, Eigen::ComputeThinU);
  if (svd.singularValues()[m - 1] < 1e-10)
    throw RankDeficient("rank-1 tensor system is linearly dependent");
  SymSubspace sub;
  sub.d = d;
  sub.basis = svd.matrixU();
  sub.origin = origin;
  return sub;
}

// Exact span of {a_i (x) a_i} and {v_l (x) v_l} of a known network.
inline SymSubspace exact_w(const TwoLayerNetwork& net) {
  return span_of_tensors(net.profiles(), SubspaceOrigin::Exact);
}

// Frobenius distance of the projectors, |P_1 - P_2|_F, computed via
// |P1 - P2|_F^2 = r1 + r2 - 2 |U1^T U2|_F^2.
inline double subspace_distance(const SymSubspace& s1, const SymSubspace& s2) {
  if (s1.dim_ambient() != s2.dim_ambient())
    throw std::invalid_argument("ambient dimensions differ");
  double cross = (s1.basis.transpose() * s2.basis).squaredNorm();
  double val = s1.rank() + s2.rank() - 2.0 * cross;
  return std::sqrt(std::max(0.0, val));
}

inline double subspace_distance(const Matrix& p1, const Matrix& p2) {
  if (p1.rows() != p2.rows() || p1.cols() != p2.cols())
    throw std::invalid_argument("ambient dimensions differ");
  return (p1 - p2).norm();
}

// |P_What - P_W|_F^2 / (m0 + m1)
inline double normalized_projection_error(const SymSubspace& estimated,
                                          const SymSubspace& exact) {
  double dist = subspace_distance(estimated, exact);
  return dist * dist / exact.rank();
}

// (m0+m1)-th singular value of the empirical second moment
// (1/m_X) sum vec(H_i) vec(H_i)^T; diagnostic for the spectral condition
// behind the PCA step.
inline double estimate_alpha(const std::vector<Matrix>& hessian_samples,
                             int k) {
  const int n = static_cast<int>(hessian_samples.size());
  if (n < k) throw std::invalid_argument("need at least k samples");
  const int d = static_cast<int>(hessian_samples.front().rows());
  Matrix samples(d * d, n);
  for (int i = 0; i < n; ++i) samples.col(i) = vec_sym(hessian_samples[i]);
  auto sb = detail::left_singular_basis(samples, 0);
  double s = detail::sigma_at(sb, k - 1);
  return s * s / n;
}

// --- JSON persistence (pipeline restart) ------------------------------------

inline void to_json(nlohmann::json& j, const SymSubspace& s) {
  j = nlohmann::json{
      {"d", s.d},
      {"rank", s.rank()},
      {"origin", s.origin == SubspaceOrigin::Exact ? "exact" : "estimated"},
      {"basis", std::vector<double>(s.basis.data(),
                                    s.basis.data() + s.basis.size())}};
}

inline SymSubspace subspace_from_json(const nlohmann::json& j) {
  SymSubspace s;
  s.d = j.at("d").get<int>();
  int r = j.at("rank").get<int>();
  auto data = j.at("basis").get<std::vector<double>>();
  if (static_cast<int>(data.size()) != s.d * s.d * r)
    throw IoError("subspace JSON has inconsistent sizes");
  s.basis = Eigen::Map<const Matrix>(data.data(), s.d * s.d, r);
  s.origin = j.at("origin").get<std::string>() == "exact"
                 ? SubspaceOrigin::Exact
                 : SubspaceOrigin::Estimated;
  return s;
}

}  // namespace netrec
