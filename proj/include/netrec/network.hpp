#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "netrec/activation.hpp"
#include "netrec/common.hpp"

namespace netrec {

// Hessian of a two-layer network at a point x, factored as
//   A * Gamma_x * A^T + V_x * T_x * V_x^T
// with V_x = A * G_x * B.
struct HessianFactors {
  Vector g_x;      // diag entries g_i'(a_i^T x + theta_i)
  Vector gamma_x;  // first-layer curvature coefficients
  Vector t_x;      // second-layer curvature coefficients
  Matrix v_x;      // d x m1

  Matrix reassemble(const Matrix& a) const {
    return a * gamma_x.asDiagonal() * a.transpose() +
           v_x * t_x.asDiagonal() * v_x.transpose();
  }
};

// Ground-truth model f(x) = 1^T h(B^T g(A^T x)) with shifted activations
// g_i(t) = phi(t + theta_i), h_l(t) = phi(t + tau_l). Columns of A and B are
// unit vectors. All members are immutable after construction; every method
// is a pure function and safe to call concurrently.
class TwoLayerNetwork {
 public:
  TwoLayerNetwork(Matrix a, Matrix b, Vector theta, Vector tau, Activation act)
      : a_(std::move(a)),
        b_(std::move(b)),
        theta_(std::move(theta)),
        tau_(std::move(tau)),
        act_(act) {
    const auto& tr = traits(act_);
    if (b_.rows() != a_.cols())
      throw std::invalid_argument("B rows must match A cols");
    if (theta_.size() != m0() || tau_.size() != m1())
      throw std::invalid_argument("shift vector sizes do not match layers");
    if (!(m1() <= m0() && m0() <= d()))
      throw std::invalid_argument("need m1 <= m0 <= d");
    for (int i = 0; i < m0(); ++i)
      if (std::abs(a_.col(i).norm() - 1.0) > 1e-12)
        throw std::invalid_argument("columns of A must have unit norm");
    for (int l = 0; l < m1(); ++l)
      if (std::abs(b_.col(l).norm() - 1.0) > 1e-12)
        throw std::invalid_argument("columns of B must have unit norm");
    // condition (A1): g_i'(0) = phi'(theta_i) must not vanish
    for (int i = 0; i < m0(); ++i)
      if (std::abs(tr.d1(theta_[i])) < 1e-8)
        throw std::invalid_argument("activation slope vanishes at shift");
  }

  int d() const { return static_cast<int>(a_.rows()); }
  int m0() const { return static_cast<int>(a_.cols()); }
  int m1() const { return static_cast<int>(b_.cols()); }
  const Matrix& a() const { return a_; }
  const Matrix& b() const { return b_; }
  const Vector& theta() const { return theta_; }
  const Vector& tau() const { return tau_; }
  Activation activation() const { return act_; }

  // diag(g_i'(0)), recomputed from the shifts on demand
  Vector g0() const {
    const auto& tr = traits(act_);
    Vector g(m0());
    for (int i = 0; i < m0(); ++i) g[i] = tr.d1(theta_[i]);
    return g;
  }

  double evaluate(const Vector& x) const {
    const auto& tr = traits(act_);
    Vector inner = a_.transpose() * x + theta_;
    for (int i = 0; i < m0(); ++i) inner[i] = tr.value(inner[i]);
    Vector outer = b_.transpose() * inner + tau_;
    double sum = 0.0;
    for (int l = 0; l < m1(); ++l) sum += tr.value(outer[l]);
    return sum;
  }

  Vector gradient(const Vector& x) const {
    const auto& tr = traits(act_);
    Vector pre1 = a_.transpose() * x + theta_;
    Vector g(m0()), gp(m0());
    for (int i = 0; i < m0(); ++i) {
      g[i] = tr.value(pre1[i]);
      gp[i] = tr.d1(pre1[i]);
    }
    Vector pre2 = b_.transpose() * g + tau_;
    Vector hp(m1());
    for (int l = 0; l < m1(); ++l) hp[l] = tr.d1(pre2[l]);
    return a_ * (gp.asDiagonal() * (b_ * hp));
  }

  HessianFactors hessian_factors(const Vector& x) const {
    const auto& tr = traits(act_);
    Vector pre1 = a_.transpose() * x + theta_;
    Vector g(m0()), gp(m0()), gpp(m0());
    for (int i = 0; i < m0(); ++i) {
      g[i] = tr.value(pre1[i]);
      gp[i] = tr.d1(pre1[i]);
      gpp[i] = tr.d2(pre1[i]);
    }
    Vector pre2 = b_.transpose() * g + tau_;
    Vector hp(m1()), hpp(m1());
    for (int l = 0; l < m1(); ++l) {
      hp[l] = tr.d1(pre2[l]);
      hpp[l] = tr.d2(pre2[l]);
    }
    HessianFactors f;
    f.g_x = gp;
    f.gamma_x = gpp.cwiseProduct(b_ * hp);
    f.t_x = hpp;
    f.v_x = a_ * gp.asDiagonal() * b_;
    return f;
  }

  // sum_i gamma_i(x) a_i a_i^T + sum_l tau_l(x) v_l(x) v_l(x)^T,
  // symmetric by construction
  Matrix hessian(const Vector& x) const {
    return hessian_factors(x).reassemble(a_);
  }

  // Unit entangled weights v_l = A G_0 b_l / |A G_0 b_l|.
  Matrix entangled_weights() const {
    Matrix v = a_ * g0().asDiagonal() * b_;
    for (int l = 0; l < m1(); ++l) {
      double nrm = v.col(l).norm();
      if (nrm <= 1e-12)
        throw DegenerateEntangledWeight(
            "entangled weight " + std::to_string(l) +
            " has vanishing norm; network is reducible");
      v.col(l) /= nrm;
    }
    return v;
  }

  // Norms |A G_0 b_l| before normalization.
  Vector entangled_weight_norms() const {
    Matrix v = a_ * g0().asDiagonal() * b_;
    Vector n(m1());
    for (int l = 0; l < m1(); ++l) n[l] = v.col(l).norm();
    return n;
  }

  // All m0 + m1 profiles (columns of A then entangled weights).
  std::vector<Vector> profiles() const {
    std::vector<Vector> w;
    w.reserve(m0() + m1());
    for (int i = 0; i < m0(); ++i) w.push_back(a_.col(i));
    Matrix v = entangled_weights();
    for (int l = 0; l < m1(); ++l) w.push_back(v.col(l));
    return w;
  }

 private:
  Matrix a_;
  Matrix b_;
  Vector theta_;
  Vector tau_;
  Activation act_;
};

// Frame constants of a vector system: smallest/largest eigenvalues of
// sum_j w_j w_j^T, and the deviation from orthonormality nu = C_F - 1.
struct FrameConstants {
  double c_f;
  double c_big_f;
  double nu;
};

inline FrameConstants frame_constants(const std::vector<Vector>& vectors) {
  if (vectors.empty()) throw std::invalid_argument("empty vector system");
  const int d = static_cast<int>(vectors.front().size());
  Matrix s = Matrix::Zero(d, d);
  for (const auto& w : vectors) s.noalias() += w * w.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  FrameConstants fc;
  fc.c_f = eig.eigenvalues().minCoeff();
  fc.c_big_f = eig.eigenvalues().maxCoeff();
  fc.nu = fc.c_big_f - 1.0;
  return fc;
}

// Riesz constants of the rank-1 system {w_j (x) w_j}: extreme eigenvalues of
// the Gram matrix G_jk = <w_j, w_k>^2.
inline std::pair<double, double> riesz_constants(
    const std::vector<Vector>& vectors) {
  const int m = static_cast<int>(vectors.size());
  if (m == 0) throw std::invalid_argument("empty vector system");
  Matrix gram(m, m);
  for (int j = 0; j < m; ++j)
    for (int k = j; k < m; ++k) {
      double ip = vectors[j].dot(vectors[k]);
      gram(j, k) = gram(k, j) = ip * ip;
    }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  double lo = eig.eigenvalues().minCoeff();
  double hi = eig.eigenvalues().maxCoeff();
  if (lo <= 1e-10)
    throw NotRieszBasis("rank-1 system is not linearly independent");
  return {lo, hi};
}

// --- JSON serialization ----------------------------------------------------

inline void to_json(nlohmann::json& j, const TwoLayerNetwork& net) {
  std::vector<double> a(net.a().data(), net.a().data() + net.a().size());
  std::vector<double> b(net.b().data(), net.b().data() + net.b().size());
  j = nlohmann::json{
      {"d", net.d()},
      {"m0", net.m0()},
      {"m1", net.m1()},
      {"activation", traits(net.activation()).name},
      {"A", a},
      {"B", b},
      {"theta", std::vector<double>(net.theta().data(),
                                    net.theta().data() + net.theta().size())},
      {"tau", std::vector<double>(net.tau().data(),
                                  net.tau().data() + net.tau().size())}};
}

inline TwoLayerNetwork network_from_json(const nlohmann::json& j) {
  int d = j.at("d").get<int>();
  int m0 = j.at("m0").get<int>();
  int m1 = j.at("m1").get<int>();
  auto a_list = j.at("A").get<std::vector<double>>();
  auto b_list = j.at("B").get<std::vector<double>>();
  if (static_cast<int>(a_list.size()) != d * m0 ||
      static_cast<int>(b_list.size()) != m0 * m1)
    throw IoError("network JSON has inconsistent matrix sizes");
  Matrix a = Eigen::Map<const Matrix>(a_list.data(), d, m0);
  Matrix b = Eigen::Map<const Matrix>(b_list.data(), m0, m1);
  auto th = j.at("theta").get<std::vector<double>>();
  auto ta = j.at("tau").get<std::vector<double>>();
  Vector theta = Eigen::Map<const Vector>(th.data(), th.size());
  Vector tau = Eigen::Map<const Vector>(ta.data(), ta.size());
  return TwoLayerNetwork(a, b, theta, tau,
                         activation_from_name(j.at("activation")));
}

}  // namespace netrec
