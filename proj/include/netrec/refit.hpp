#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "netrec/activation.hpp"
#include "netrec/common.hpp"
#include "netrec/network.hpp"
#include "netrec/oracle.hpp"

namespace netrec {

// Free parameters of the deparametrized network
//   fhat(x) = 1^T phi(D1 Vhat^T Ahat^{-T} D2 phi(D3 Ahat^T x + w) + z).
// Diagonal matrices are stored as vectors.
struct RefitParams {
  Vector d1;  // m1
  Vector d2;  // m0
  Vector d3;  // m0
  Vector w;   // m0 first-layer biases
  Vector z;   // m1 second-layer biases
};

inline int refit_param_count(int m0, int m1) { return 3 * m0 + 2 * m1; }
inline int full_param_count(int m0, int m1) {
  return m0 * m0 + m0 * m1 + m0 + m1;
}

// Least-squares problem over the deparametrized family with fixed entangled
// weights Ahat (invertible) and Vhat, fit to samples (X_i, Y_i).
struct RefitProblem {
  Matrix a_hat;  // d x m0
  Matrix v_hat;  // d x m1
  Activation act = Activation::Tanh;
  Matrix x;  // d x m_f
  Vector y;  // m_f

  // derived, fixed per problem
  Matrix c;  // m1 x m0, Vhat^T Ahat^{-T}
  Matrix p;  // m0 x m_f, Ahat^T X

  int m0() const { return static_cast<int>(a_hat.cols()); }
  int m1() const { return static_cast<int>(v_hat.cols()); }
  int m_f() const { return static_cast<int>(x.cols()); }
};

namespace detail {

inline Matrix checked_c_matrix(const Matrix& a_hat, const Matrix& v_hat) {
  Eigen::JacobiSVD<Matrix> svd(a_hat, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double smin = svd.singularValues().minCoeff();
  double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin >= 1e8)
    throw SingularAHat("Ahat is singular or too ill-conditioned for a refit");
  // C = Vhat^T Ahat^{-T} = (Ahat^{-1} Vhat)^T
  return svd.solve(v_hat).transpose();
}

template <typename Fn>
inline Matrix apply(const Matrix& m, Fn f) {
  return m.unaryExpr([&](double t) { return f(t); });
}

}  // namespace detail

// Geometry-only problem (no samples); enough for evaluating fhat.
inline RefitProblem make_refit_geometry(Matrix a_hat, Matrix v_hat,
                                        Activation act) {
  RefitProblem pr;
  pr.c = detail::checked_c_matrix(a_hat, v_hat);
  pr.a_hat = std::move(a_hat);
  pr.v_hat = std::move(v_hat);
  pr.act = act;
  pr.x.resize(pr.a_hat.rows(), 0);
  pr.y.resize(0);
  pr.p.resize(pr.m0(), 0);
  return pr;
}

// Samples X_i ~ N(0, I_d), queries Y_i = f(X_i); m_f point queries.
inline RefitProblem make_refit_problem(Matrix a_hat, Matrix v_hat,
                                       Activation act, const QueryOracle& f,
                                       int m_f, std::uint64_t seed) {
  RefitProblem pr = make_refit_geometry(std::move(a_hat), std::move(v_hat), act);
  const int d = static_cast<int>(pr.a_hat.rows());
  pr.x.resize(d, m_f);
  pr.y.resize(m_f);
  for (int i = 0; i < m_f; ++i) {
    auto gen = rng::stream(seed, rng::kRefitSample, i);
    pr.x.col(i) = rng::gaussian_vector(gen, d);
    pr.y[i] = f(pr.x.col(i));
  }
  pr.p = pr.a_hat.transpose() * pr.x;
  return pr;
}

// Forward pass for a single point, with Ahat^{-T} folded into the cached C.
inline double fhat_eval(const RefitProblem& pr, const RefitParams& th,
                        const Vector& x) {
  const auto& tr = traits(pr.act);
  Vector q = th.d3.cwiseProduct(pr.a_hat.transpose() * x) + th.w;
  Vector r = q.unaryExpr([&](double t) { return tr.value(t); });
  Vector u = th.d1.cwiseProduct(pr.c * th.d2.cwiseProduct(r)) + th.z;
  double sum = 0.0;
  for (int l = 0; l < u.size(); ++l) sum += tr.value(u[l]);
  return sum;
}

// Batched forward pass over the columns of a precomputed P = Ahat^T X.
inline Vector fhat_eval_pre(const RefitProblem& pr, const RefitParams& th,
                            const Matrix& p) {
  const auto& tr = traits(pr.act);
  Matrix q = ((p.array().colwise() * th.d3.array()).colwise() + th.w.array())
                 .matrix();
  Matrix r = detail::apply(q, tr.value);
  Matrix s = (r.array().colwise() * th.d2.array()).matrix();
  Matrix u = (((pr.c * s).array().colwise() * th.d1.array()).colwise() +
              th.z.array())
                 .matrix();
  return detail::apply(u, tr.value).colwise().sum().transpose();
}

// J = sum_i (Y_i - fhat(X_i))^2 and its gradient over all five parameter
// blocks, by the chain rule through the two-layer composition.
inline std::pair<double, RefitParams> loss_and_grad(const RefitProblem& pr,
                                                    const RefitParams& th) {
  const auto& tr = traits(pr.act);
  // forward
  Matrix q = ((pr.p.array().colwise() * th.d3.array()).colwise() +
              th.w.array())
                 .matrix();
  Matrix r = detail::apply(q, tr.value);
  Matrix s = (r.array().colwise() * th.d2.array()).matrix();
  Matrix t = pr.c * s;
  Matrix u = ((t.array().colwise() * th.d1.array()).colwise() + th.z.array())
                 .matrix();
  Vector yhat = detail::apply(u, tr.value).colwise().sum().transpose();
  Vector res = pr.y - yhat;
  double loss = res.squaredNorm();
  // backward; e = dJ/dyhat
  Eigen::RowVectorXd e = (-2.0 * res).transpose();
  Matrix du = (detail::apply(u, tr.d1).array().rowwise() * e.array()).matrix();
  RefitParams g;
  g.z = du.rowwise().sum();
  g.d1 = du.cwiseProduct(t).rowwise().sum();
  Matrix dus = (du.array().colwise() * th.d1.array()).matrix();
  Matrix gs = pr.c.transpose() * dus;
  g.d2 = gs.cwiseProduct(r).rowwise().sum();
  Matrix gq = (gs.array().colwise() * th.d2.array())
                  .matrix()
                  .cwiseProduct(detail::apply(q, tr.d1));
  g.w = gq.rowwise().sum();
  g.d3 = gq.cwiseProduct(pr.p).rowwise().sum();
  return {loss, g};
}

struct FitOptions {
  double lr = 0.0;   // 0 selects the activation default (0.5 sig / 0.025 tanh)
  long iters = 100000;
  std::optional<bool> fix_d3;  // default: fix for odd activations
  std::uint64_t seed = 0;
  double stall_rel_tol = 1e-12;
  int stall_window = 1000;
  bool record_trace = true;
};

struct FitResult {
  RefitParams params;
  std::vector<double> loss_trace;
  long iters_run = 0;
  bool stalled = false;
  double final_loss = 0.0;
};

inline double default_learning_rate(Activation act) {
  return act == Activation::ShiftedSigmoid ? 0.5 : 0.025;
}

// Plain full-batch gradient descent with a fixed step. The step is taken on
// the mean squared error, so the learning rate is independent of the sample
// count; the reported objective stays the plain sum of squares.
// Initialization sets D2 = D3 = I and draws the remaining entries from
// N(0, 0.1). Stops early once the relative loss decrease over
// `stall_window` iterations falls below `stall_rel_tol`.
inline FitResult fit(const RefitProblem& pr, const FitOptions& opts) {
  const int m0 = pr.m0(), m1 = pr.m1();
  const double lr =
      (opts.lr > 0.0 ? opts.lr : default_learning_rate(pr.act)) / pr.m_f();
  const bool fix_d3 = opts.fix_d3.value_or(traits(pr.act).odd);

  auto gen = rng::stream(opts.seed, rng::kRefitInit, 0);
  std::normal_distribution<double> init(0.0, 0.1);
  RefitParams th;
  th.d2 = Vector::Ones(m0);
  th.d3 = Vector::Ones(m0);
  th.d1.resize(m1);
  th.w.resize(m0);
  th.z.resize(m1);
  for (int l = 0; l < m1; ++l) th.d1[l] = init(gen);
  for (int i = 0; i < m0; ++i) th.w[i] = init(gen);
  for (int l = 0; l < m1; ++l) th.z[l] = init(gen);

  FitResult out;
  if (opts.record_trace) out.loss_trace.reserve(opts.iters + 1);
  double window_loss = std::numeric_limits<double>::infinity();
  double loss = 0.0;
  long it = 0;
  for (; it < opts.iters; ++it) {
    auto [l, g] = loss_and_grad(pr, th);
    loss = l;
    if (!std::isfinite(loss)) throw Diverged("refit loss is not finite");
    if (opts.record_trace) out.loss_trace.push_back(loss);
    if (it % opts.stall_window == 0) {
      if (window_loss - loss < opts.stall_rel_tol * window_loss) {
        out.stalled = true;
        break;
      }
      window_loss = loss;
    }
    th.d1 -= lr * g.d1;
    th.d2 -= lr * g.d2;
    if (!fix_d3) th.d3 -= lr * g.d3;
    th.w -= lr * g.w;
    th.z -= lr * g.z;
  }
  out.params = std::move(th);
  out.iters_run = it;
  out.final_loss = loss;
  return out;
}

// Greedy sign/permutation match of estimated columns onto truth columns:
// est_j ~ sign_j * truth_{perm_j}, nearest unused column first.
struct ColumnMatch {
  std::vector<int> perm;
  std::vector<double> sign;
  double total_sq_dist = 0.0;
};

inline ColumnMatch match_columns(const Matrix& estimate, const Matrix& truth) {
  const int n = static_cast<int>(estimate.cols());
  ColumnMatch cm;
  cm.perm.assign(n, -1);
  cm.sign.assign(n, 1.0);
  std::vector<bool> used(truth.cols(), false);
  for (int j = 0; j < n; ++j) {
    double best = std::numeric_limits<double>::infinity();
    int best_i = -1;
    double best_s = 1.0;
    for (int i = 0; i < truth.cols(); ++i) {
      if (used[i]) continue;
      double dp = (estimate.col(j) - truth.col(i)).squaredNorm();
      double dm = (estimate.col(j) + truth.col(i)).squaredNorm();
      double d = std::min(dp, dm);
      if (d < best) {
        best = d;
        best_i = i;
        best_s = dp <= dm ? 1.0 : -1.0;
      }
    }
    cm.perm[j] = best_i;
    cm.sign[j] = best_s;
    used[best_i] = true;
    cm.total_sq_dist += best;
  }
  return cm;
}

struct RefitMetrics {
  double mse = 0.0;      // relative mean squared error on fresh samples
  double e_inf = 0.0;    // relative L-infinity error
  double e_theta = std::numeric_limits<double>::quiet_NaN();
  double e_tau = std::numeric_limits<double>::quiet_NaN();
};

// Test-set errors on m_test fresh Gaussian points, plus relative bias errors
// against the permuted truth when the ground-truth network is available.
// The sign ambiguity of odd activations is removed by normalizing with
// sign(D3) before comparing first-layer biases.
inline RefitMetrics refit_metrics(const RefitProblem& pr,
                                  const RefitParams& th,
                                  const TwoLayerNetwork* truth, int m_test,
                                  std::uint64_t seed) {
  const int d = static_cast<int>(pr.a_hat.rows());
  RefitMetrics out;
  double num = 0.0, den = 0.0, num_inf = 0.0, den_inf = 0.0;
  const int chunk = 4096;
  Matrix xs(d, chunk);
  for (int done = 0; done < m_test;) {
    int n = std::min(chunk, m_test - done);
    for (int i = 0; i < n; ++i) {
      auto gen = rng::stream(seed, rng::kTestSample, done + i);
      xs.col(i) = rng::gaussian_vector(gen, d);
    }
    Matrix p = pr.a_hat.transpose() * xs.leftCols(n);
    Vector yh = fhat_eval_pre(pr, th, p);
    for (int i = 0; i < n; ++i) {
      double yt = truth ? truth->evaluate(xs.col(i)) : 0.0;
      double diff = yh[i] - yt;
      num += diff * diff;
      den += yt * yt;
      num_inf = std::max(num_inf, std::abs(diff));
      den_inf = std::max(den_inf, std::abs(yt));
    }
    done += n;
  }
  out.mse = num / den;
  out.e_inf = num_inf / den_inf;
  if (truth) {
    auto ma = match_columns(pr.a_hat, truth->a());
    Vector w_canon = th.w;
    for (int i = 0; i < w_canon.size(); ++i)
      if (th.d3[i] < 0) w_canon[i] = -w_canon[i];
    Vector w_expect(truth->m0());
    for (int j = 0; j < truth->m0(); ++j)
      w_expect[j] = ma.sign[j] * truth->theta()[ma.perm[j]];
    out.e_theta =
        (w_canon - w_expect).squaredNorm() / truth->theta().squaredNorm();
    auto mv = match_columns(pr.v_hat, truth->entangled_weights());
    Vector z_expect(truth->m1());
    for (int l = 0; l < truth->m1(); ++l)
      z_expect[l] = truth->tau()[mv.perm[l]];
    out.e_tau = (th.z - z_expect).squaredNorm() / truth->tau().squaredNorm();
  }
  return out;
}

// Entangled weights permuted and sign-flipped column by column,
// est_j = sign_j * truth_{perm_j}.
struct SignedPermutation {
  std::vector<double> sign;
  std::vector<int> perm;
};

// Closed-form parameters that reproduce the original network exactly when
// Ahat = A pi_A S_A and Vhat = V pi_V S_V: D3 = S_A, w = pi_A^T theta,
// D2 = S_A pi_A^T G_0^{-1} pi_A, D1 = S_V pi_V^T N pi_V with N the
// entangled-weight norms, z = pi_V^T tau. With odd_form the sign of D3 is
// absorbed into D2 and w, leaving D3 = I.
inline RefitParams reparametrization_params(const TwoLayerNetwork& net,
                                            const SignedPermutation& pa,
                                            const SignedPermutation& pv,
                                            bool odd_form = false) {
  const int m0 = net.m0(), m1 = net.m1();
  const auto& tr = traits(net.activation());
  Vector norms = net.entangled_weight_norms();
  RefitParams th;
  th.d1.resize(m1);
  th.d2.resize(m0);
  th.d3.resize(m0);
  th.w.resize(m0);
  th.z.resize(m1);
  for (int l = 0; l < m1; ++l) {
    th.d1[l] = pv.sign[l] * norms[pv.perm[l]];
    th.z[l] = net.tau()[pv.perm[l]];
  }
  for (int j = 0; j < m0; ++j) {
    double slope = tr.d1(net.theta()[pa.perm[j]]);
    th.d2[j] = pa.sign[j] / slope;
    th.d3[j] = pa.sign[j];
    th.w[j] = net.theta()[pa.perm[j]];
  }
  if (odd_form) {
    if (!tr.odd)
      throw std::invalid_argument("odd form requires an odd activation");
    for (int j = 0; j < m0; ++j) {
      th.d2[j] *= pa.sign[j];
      th.w[j] *= pa.sign[j];
      th.d3[j] = 1.0;
    }
  }
  return th;
}

// Exact reparametrization identity: builds Ahat = A pi_A S_A and
// Vhat = V pi_V S_V, derives (D1, D2, D3, w, z) in closed form, and returns
// the largest pointwise deviation |f - fhat| over 100 random points.
inline double verify_reparametrization(const TwoLayerNetwork& net,
                                       const SignedPermutation& pa,
                                       const SignedPermutation& pv,
                                       bool odd_form = false,
                                       std::uint64_t seed = 12345) {
  const int d = net.d(), m0 = net.m0(), m1 = net.m1();
  if (d != m0) throw SingularAHat("reparametrization requires square A");
  Matrix a_hat(d, m0), v_hat(d, m1);
  for (int j = 0; j < m0; ++j)
    a_hat.col(j) = pa.sign[j] * net.a().col(pa.perm[j]);
  Matrix v = net.entangled_weights();
  for (int l = 0; l < m1; ++l)
    v_hat.col(l) = pv.sign[l] * v.col(pv.perm[l]);

  RefitParams th = reparametrization_params(net, pa, pv, odd_form);
  RefitProblem pr = make_refit_geometry(a_hat, v_hat, net.activation());
  auto gen = rng::stream(seed, rng::kTestSample, 0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vector x = rng::gaussian_vector(gen, d);
    worst = std::max(worst,
                     std::abs(net.evaluate(x) - fhat_eval(pr, th, x)));
  }
  return worst;
}

inline SignedPermutation identity_permutation(int n) {
  SignedPermutation sp;
  sp.sign.assign(n, 1.0);
  sp.perm.resize(n);
  for (int i = 0; i < n; ++i) sp.perm[i] = i;
  return sp;
}

inline SignedPermutation random_signed_permutation(int n,
                                                   std::mt19937_64& gen) {
  SignedPermutation sp = identity_permutation(n);
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(sp.perm[i], sp.perm[pick(gen)]);
  }
  std::uniform_int_distribution<int> coin(0, 1);
  for (int i = 0; i < n; ++i) sp.sign[i] = coin(gen) ? 1.0 : -1.0;
  return sp;
}

inline void to_json(nlohmann::json& j, const RefitParams& p) {
  auto vec = [](const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  j = nlohmann::json{{"d1", vec(p.d1)},
                     {"d2", vec(p.d2)},
                     {"d3", vec(p.d3)},
                     {"w", vec(p.w)},
                     {"z", vec(p.z)}};
}

inline RefitParams refit_params_from_json(const nlohmann::json& j) {
  auto vec = [](const nlohmann::json& item) {
    auto data = item.get<std::vector<double>>();
    return Vector(Eigen::Map<const Vector>(data.data(), data.size()));
  };
  RefitParams p;
  p.d1 = vec(j.at("d1"));
  p.d2 = vec(j.at("d2"));
  p.d3 = vec(j.at("d3"));
  p.w = vec(j.at("w"));
  p.z = vec(j.at("z"));
  return p;
}

}  // namespace netrec
