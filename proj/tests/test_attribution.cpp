#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "netrec/attribution.hpp"
#include "netrec/harness.hpp"
#include "test_util.hpp"

using namespace netrec;
using Catch::Matchers::WithinAbs;

TEST_CASE("trajectory_energy") {
  SECTION("constant functions carry no energy") {
    QueryOracle f(3, [](const Vector&) { return 2.0; });
    double e = trajectory_energy(f, Vector::Unit(3, 0),
                                 TrajectoryConfig::defaults());
    REQUIRE_THAT(e, WithinAbs(0.0, 1e-18));
  }

  SECTION("first-layer directions keep their gradient mass") {
    // exactly orthonormal first layer: along a_i the gradient norm tends
    // to a positive constant, so the energy stays close to the analytic
    // value and well above the tail-only level
    Scenario sc;
    sc.m0 = 6;
    sc.m1 = 2;
    sc.seed = 3;
    sc.perturbation_target = 0.0;  // exactly orthonormal columns
    sc.act = Activation::ShiftedSigmoid;
    auto net = generate_network(sc);
    QueryOracle f(net);
    auto cfg = TrajectoryConfig::defaults();
    for (int i = 0; i < net.m0(); ++i) {
      Vector a_i = net.a().col(i);
      double fd_energy = trajectory_energy(f, a_i, cfg);
      // independent oracle: the same sum from analytic gradients
      double analytic = 0.0;
      for (double t : cfg.t_grid)
        analytic += net.gradient(Vector(t * a_i)).squaredNorm();
      REQUIRE_THAT(fd_energy, WithinAbs(analytic, 1e-3 * (1.0 + analytic)));
      // limiting gradient norm along the axis stays positive
      double plateau = net.gradient(Vector(1000.0 * a_i)).squaredNorm();
      REQUIRE(plateau > 0.0);
      REQUIRE(fd_energy >= 0.5 * cfg.t_grid.size() * plateau);
    }
  }

  SECTION("symmetric under sign flips for tanh with zero shifts") {
    auto gen = rng::stream(9, rng::kMisc, 3);
    Matrix a(4, 3), b(3, 2);
    for (int i = 0; i < 3; ++i) a.col(i) = rng::unit_sphere(gen, 4);
    for (int l = 0; l < 2; ++l) b.col(l) = rng::unit_sphere(gen, 3);
    TwoLayerNetwork net(a, b, Vector::Zero(3), Vector::Zero(2),
                        Activation::Tanh);
    QueryOracle f(net);
    auto cfg = TrajectoryConfig::defaults();
    Vector w = rng::unit_sphere(gen, 4);
    double plus = trajectory_energy(f, w, cfg);
    double minus = trajectory_energy(f, Vector(-w), cfg);
    REQUIRE_THAT(plus, WithinAbs(minus, 1e-3 * (1.0 + plus)));
  }

  SECTION("consumes |grid| * (d + 1) queries") {
    QueryOracle f(5, [](const Vector& x) { return x.squaredNorm(); });
    trajectory_energy(f, Vector::Unit(5, 0), TrajectoryConfig::defaults());
    REQUIRE(f.query_count() == 40 * 6);
  }
}

TEST_CASE("assign_layers") {
  SECTION("largest energies go to layer 1") {
    auto asg = assign_layers({5.0, 1.0, 4.0}, 2);
    REQUIRE(asg.layer1 == std::vector<int>{0, 2});
    REQUIRE(asg.layer2 == std::vector<int>{1});
  }

  SECTION("equal energies assign the first m0 indices to layer 1") {
    auto asg = assign_layers({2.0, 2.0, 2.0, 2.0}, 2);
    REQUIRE(asg.layer1 == std::vector<int>{0, 1});
    REQUIRE(asg.layer2 == std::vector<int>{2, 3});
  }

  SECTION("depends only on the energy ordering") {
    std::vector<double> e = {0.3, 7.0, 2.5, 0.9, 5.1};
    auto asg = assign_layers(e, 3);
    std::vector<double> transformed;
    for (double v : e) transformed.push_back(std::log1p(2.0 * v));
    auto asg2 = assign_layers(transformed, 3);
    REQUIRE(asg.layer1 == asg2.layer1);
    REQUIRE(asg.layer2 == asg2.layer2);
  }
}

TEST_CASE("success_rates") {
  SECTION("perfect assignment") {
    LayerAssignment asg;
    asg.layer1 = {0, 1};
    asg.layer2 = {2};
    auto [l1, l2] = success_rates(asg, {1, 1, 2}, 2, 1);
    REQUIRE(l1 == 1.0);
    REQUIRE(l2 == 1.0);
  }

  SECTION("fully swapped assignment with equal widths") {
    LayerAssignment asg;
    asg.layer1 = {2, 3};
    asg.layer2 = {0, 1};
    auto [l1, l2] = success_rates(asg, {1, 1, 2, 2}, 2, 2);
    REQUIRE(l1 == 0.0);
    REQUIRE(l2 == 0.0);
  }
}

TEST_CASE("truth labels are symmetric under profile sign flips") {
  Scenario sc;
  sc.m0 = 5;
  sc.m1 = 2;
  sc.seed = 21;
  auto net = generate_network(sc);
  auto profiles = net.profiles();
  std::vector<Vector> flipped;
  for (const auto& w : profiles) flipped.push_back(-w);
  REQUIRE(truth_labels(profiles, net) == truth_labels(flipped, net));
  auto labels = truth_labels(profiles, net);
  for (int i = 0; i < 5; ++i) REQUIRE(labels[i] == 1);
  for (int l = 5; l < 7; ++l) REQUIRE(labels[l] == 2);
}

TEST_CASE("end-to-end attribution on an orthonormal sigmoid network") {
  // with exactly orthonormal first-layer weights the energy ordering
  // separates the layers
  Scenario sc;
  sc.m0 = 8;
  sc.m1 = 2;
  sc.seed = 33;
  sc.perturbation_target = 0.0;
  sc.act = Activation::ShiftedSigmoid;
  auto net = generate_network(sc);
  QueryOracle f(net);
  auto profiles = net.profiles();
  auto cfg = TrajectoryConfig::defaults();
  std::vector<double> energies;
  for (const auto& w : profiles)
    energies.push_back(trajectory_energy(f, w, cfg));
  auto asg = assign_layers(energies, 8);
  auto [l1, l2] = success_rates(asg, truth_labels(profiles, net), 8, 2);
  REQUIRE(l1 == 1.0);
  REQUIRE(l2 == 1.0);
}
