#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "netrec/harness.hpp"
#include "netrec/network.hpp"
#include "netrec/oracle.hpp"
#include "test_util.hpp"

using namespace netrec;
using Catch::Matchers::WithinAbs;

namespace {

TwoLayerNetwork zero_shift_net(int d, int m0, int m1, Activation act,
                               std::uint64_t seed) {
  auto gen = rng::stream(seed, rng::kMisc, 7);
  Matrix a(d, m0), b(m0, m1);
  for (int i = 0; i < m0; ++i) a.col(i) = rng::unit_sphere(gen, d);
  for (int l = 0; l < m1; ++l) b.col(l) = rng::unit_sphere(gen, m0);
  return TwoLayerNetwork(a, b, Vector::Zero(m0), Vector::Zero(m1), act);
}

TwoLayerNetwork permuted(const TwoLayerNetwork& net,
                         const std::vector<int>& p) {
  Matrix a(net.d(), net.m0()), b(net.m0(), net.m1());
  Vector theta(net.m0());
  for (int i = 0; i < net.m0(); ++i) {
    a.col(i) = net.a().col(p[i]);
    b.row(i) = net.b().row(p[i]);
    theta[i] = net.theta()[p[i]];
  }
  return TwoLayerNetwork(a, b, theta, net.tau(), net.activation());
}

}  // namespace

TEST_CASE("evaluate") {
  SECTION("tanh with zero shifts vanishes at the origin") {
    auto net = zero_shift_net(4, 3, 2, Activation::Tanh, 11);
    REQUIRE(net.evaluate(Vector::Zero(4)) == 0.0);
  }

  SECTION("matches a hand-chained scalar computation") {
    // d = m0 = 2, m1 = 1, A = I, B = e1, shifted sigmoid, zero shifts
    Matrix a = Matrix::Identity(2, 2);
    Matrix b(2, 1);
    b << 1.0, 0.0;
    TwoLayerNetwork net(a, b, Vector::Zero(2), Vector::Zero(1),
                        Activation::ShiftedSigmoid);
    Vector x(2);
    x << 1.0, 0.0;
    // straight-line oracle: inner = phi(1), phi(0) = 0; output = phi(inner)
    double inner = 1.0 / (1.0 + std::exp(-1.0)) - 0.5;
    double expected = 1.0 / (1.0 + std::exp(-inner)) - 0.5;
    REQUIRE_THAT(net.evaluate(x), WithinAbs(expected, 1e-15));
  }

  SECTION("invariant under simultaneous permutation of A, B rows, theta") {
    auto net = testutil::random_net(5, 4, 2, Activation::ShiftedSigmoid, 3);
    std::vector<int> p = {2, 0, 3, 1};
    auto net2 = permuted(net, p);
    auto gen = rng::stream(99, rng::kMisc, 0);
    for (int t = 0; t < 20; ++t) {
      Vector x = rng::gaussian_vector(gen, 5);
      REQUIRE_THAT(net2.evaluate(x), WithinAbs(net.evaluate(x), 1e-14));
    }
  }
}

TEST_CASE("gradient") {
  SECTION("closed form at the origin for tanh with zero shifts") {
    auto net = zero_shift_net(4, 4, 2, Activation::Tanh, 5);
    // G_0 = I and h'(0) = 1, so the gradient is A B 1
    Vector expected = net.a() * (net.b() * Vector::Ones(2));
    REQUIRE((net.gradient(Vector::Zero(4)) - expected).norm() < 1e-14);
  }

  SECTION("matches central finite differences componentwise") {
    for (std::uint64_t seed : {1, 2, 3}) {
      auto net = testutil::random_net(6, 5, 3, Activation::Tanh, seed);
      QueryOracle oracle(net);
      auto gen = rng::stream(seed, rng::kMisc, 2);
      for (int t = 0; t < 5; ++t) {
        Vector x = rng::unit_sphere(gen, 6);
        Vector fd = central_gradient(oracle, x, 1e-6);
        REQUIRE((net.gradient(x) - fd).cwiseAbs().maxCoeff() <= 1e-7);
      }
    }
  }

  SECTION("permutation equivariance") {
    auto net = testutil::random_net(5, 4, 2, Activation::Tanh, 8);
    std::vector<int> p = {1, 3, 0, 2};
    auto net2 = permuted(net, p);
    auto gen = rng::stream(17, rng::kMisc, 0);
    Vector x = rng::unit_sphere(gen, 5);
    REQUIRE((net.gradient(x) - net2.gradient(x)).norm() < 1e-13);
  }

  SECTION("central differences converge at second order") {
    auto net = testutil::random_net(5, 4, 2, Activation::ShiftedSigmoid, 21);
    QueryOracle oracle(net);
    auto gen = rng::stream(22, rng::kMisc, 0);
    double h = 1e-3;
    double err_h = 0.0, err_h2 = 0.0;
    for (int t = 0; t < 100; ++t) {
      Vector x = rng::unit_sphere(gen, 5);
      Vector g = net.gradient(x);
      err_h = std::max(
          err_h, (g - central_gradient(oracle, x, h)).cwiseAbs().maxCoeff());
      err_h2 = std::max(
          err_h2,
          (g - central_gradient(oracle, x, h / 2)).cwiseAbs().maxCoeff());
    }
    double ratio = err_h / err_h2;
    REQUIRE(ratio > 3.5);
    REQUIRE(ratio < 4.5);
  }
}

TEST_CASE("hessian") {
  SECTION("tanh with zero shifts has a vanishing Hessian at the origin") {
    auto net = zero_shift_net(5, 4, 2, Activation::Tanh, 13);
    REQUIRE(net.hessian(Vector::Zero(5)).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("is symmetric and equals the reassembled factors") {
    auto net = testutil::random_net(6, 5, 3, Activation::ShiftedSigmoid, 4);
    auto gen = rng::stream(4, rng::kMisc, 3);
    for (int t = 0; t < 10; ++t) {
      Vector x = rng::gaussian_vector(gen, 6);
      Matrix h = net.hessian(x);
      REQUIRE((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      auto f = net.hessian_factors(x);
      REQUIRE((f.reassemble(net.a()) - h).norm() <= 1e-12);
    }
  }
}

TEST_CASE("entangled weights") {
  SECTION("identity A with equal shifts and B = e1 gives v = e1") {
    Matrix a = Matrix::Identity(4, 4);
    Matrix b = Matrix::Zero(4, 1);
    b(0, 0) = 1.0;
    Vector theta = Vector::Constant(4, 0.2);
    TwoLayerNetwork net(a, b, theta, Vector::Zero(1), Activation::Tanh);
    Matrix v = net.entangled_weights();
    REQUIRE((v.col(0) - Vector::Unit(4, 0)).norm() < 1e-15);
  }

  SECTION("a second-layer weight hitting one neuron returns that profile") {
    // the (2,2,1) configuration where the second first-layer neuron is
    // never used: v_1 = +- a_1
    Matrix a(2, 2);
    a << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0),
        -1.0 / std::sqrt(2.0);
    Matrix b(2, 1);
    b << 1.0, 0.0;
    TwoLayerNetwork net(a, b, Vector::Zero(2), Vector::Zero(1),
                        Activation::ShiftedSigmoid);
    Matrix v = net.entangled_weights();
    double dist = std::min((v.col(0) - a.col(0)).norm(),
                           (v.col(0) + a.col(0)).norm());
    REQUIRE(dist < 1e-14);
  }

  SECTION("agrees with an explicit matrix product") {
    auto net = testutil::random_net(6, 5, 3, Activation::Tanh, 23);
    Matrix v = net.entangled_weights();
    const auto& tr = traits(Activation::Tanh);
    for (int l = 0; l < 3; ++l) {
      Vector u = Vector::Zero(6);
      for (int i = 0; i < 5; ++i)
        u += net.a().col(i) * tr.d1(net.theta()[i]) * net.b()(i, l);
      u /= u.norm();
      REQUIRE((v.col(l) - u).norm() < 1e-14);
    }
  }

  SECTION("degenerate entangled weight is rejected") {
    Matrix a(2, 2);
    a.col(0) = Vector::Unit(2, 0);
    a.col(1) = Vector::Unit(2, 0);
    Matrix b(2, 1);
    b << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
    TwoLayerNetwork net(a, b, Vector::Zero(2), Vector::Zero(1),
                        Activation::Tanh);
    REQUIRE_THROWS_AS(net.entangled_weights(), DegenerateEntangledWeight);
  }
}

TEST_CASE("frame constants") {
  SECTION("orthonormal basis") {
    auto w = testutil::orthonormal_vectors(4, 4, 31);
    auto fc = frame_constants(w);
    REQUIRE_THAT(fc.c_f, WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(fc.c_big_f, WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(fc.nu, WithinAbs(0.0, 1e-12));
  }

  SECTION("normalized tight frame reaches m/d") {
    // three unit vectors at 120 degrees in the plane
    std::vector<Vector> w;
    for (int k = 0; k < 3; ++k) {
      Vector v(2);
      double ang = 2.0 * M_PI * k / 3.0;
      v << std::cos(ang), std::sin(ang);
      w.push_back(v);
    }
    auto fc = frame_constants(w);
    REQUIRE_THAT(fc.c_f, WithinAbs(1.5, 1e-12));
    REQUIRE_THAT(fc.c_big_f, WithinAbs(1.5, 1e-12));
  }

  SECTION("rank-deficient frame") {
    std::vector<Vector> w = {Vector::Unit(2, 0), Vector::Unit(2, 0)};
    auto fc = frame_constants(w);
    REQUIRE_THAT(fc.c_f, WithinAbs(0.0, 1e-14));
    REQUIRE_THAT(fc.c_big_f, WithinAbs(2.0, 1e-14));
    REQUIRE_THAT(fc.nu, WithinAbs(1.0, 1e-14));
  }

  SECTION("sampled frame inequality") {
    auto net = testutil::random_net(6, 5, 2, Activation::Tanh, 37);
    auto w = net.profiles();
    auto fc = frame_constants(w);
    auto gen = rng::stream(37, rng::kMisc, 5);
    for (int t = 0; t < 1000; ++t) {
      Vector x = rng::unit_sphere(gen, 6);
      double s = 0.0;
      for (const auto& wj : w) {
        double ip = wj.dot(x);
        s += ip * ip;
      }
      REQUIRE(s >= fc.c_f - 1e-9);
      REQUIRE(s <= fc.c_big_f + 1e-9);
    }
  }
}

TEST_CASE("riesz constants") {
  SECTION("orthonormal system has unit Gram") {
    auto w = testutil::orthonormal_vectors(5, 5, 41);
    auto [lo, hi] = riesz_constants(w);
    REQUIRE_THAT(lo, WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(hi, WithinAbs(1.0, 1e-12));
  }

  SECTION("pair with overlap rho has eigenvalues 1 +- rho^2") {
    double rho = 0.6;
    Vector w1 = Vector::Unit(3, 0);
    Vector w2(3);
    w2 << rho, std::sqrt(1 - rho * rho), 0.0;
    auto [lo, hi] = riesz_constants({w1, w2});
    REQUIRE_THAT(lo, WithinAbs(1.0 - rho * rho, 1e-12));
    REQUIRE_THAT(hi, WithinAbs(1.0 + rho * rho, 1e-12));
  }

  SECTION("duplicated vector is rejected") {
    Vector w = Vector::Unit(3, 1);
    REQUIRE_THROWS_AS(riesz_constants({w, w}), NotRieszBasis);
  }

  SECTION("perturbed orthogonal scenario is a Riesz basis") {
    Scenario sc;
    sc.m0 = 10;
    sc.m1 = 3;
    sc.seed = 7;
    auto net = generate_network(sc);
    auto [lo, hi] = riesz_constants(net.profiles());
    REQUIRE(lo > 0.0);
    REQUIRE(hi >= lo);
  }
}

TEST_CASE("network construction guards") {
  Matrix a = Matrix::Identity(3, 2);
  Matrix b(2, 1);
  b << 1.0, 0.0;

  SECTION("non-unit column rejected") {
    Matrix bad = a;
    bad(0, 0) = 1.5;
    REQUIRE_THROWS_AS(TwoLayerNetwork(bad, b, Vector::Zero(2), Vector::Zero(1),
                                      Activation::Tanh),
                      std::invalid_argument);
  }

  SECTION("vanishing activation slope rejected") {
    Vector theta(2);
    theta << 50.0, 0.0;  // sigmoid slope underflows the 1e-8 floor
    REQUIRE_THROWS_AS(TwoLayerNetwork(a, b, theta, Vector::Zero(1),
                                      Activation::ShiftedSigmoid),
                      std::invalid_argument);
  }
}

TEST_CASE("network JSON round trip") {
  auto net = testutil::random_net(5, 4, 2, Activation::ShiftedSigmoid, 51);
  nlohmann::json j = net;
  auto net2 = network_from_json(j);
  REQUIRE(net2.d() == net.d());
  REQUIRE(net2.a() == net.a());
  REQUIRE(net2.b() == net.b());
  REQUIRE(net2.theta() == net.theta());
  REQUIRE(net2.tau() == net.tau());
  // serialized form is reproducible byte for byte
  nlohmann::json j2 = net2;
  REQUIRE(j.dump() == j2.dump());
}
