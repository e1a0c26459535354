#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "netrec/harness.hpp"
#include "netrec/report.hpp"
#include "test_util.hpp"

using namespace netrec;
using Catch::Matchers::WithinAbs;

namespace {

double sv_stat(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  double acc = 0.0;
  for (int i = 0; i < svd.singularValues().size(); ++i) {
    double dev = svd.singularValues()[i] - 1.0;
    acc += dev * dev;
  }
  return std::sqrt(acc);
}

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.m_x = 150;
  cfg.restarts = 60;
  cfg.tol = 1e-7;
  cfg.refit_iters = 2000;
  cfg.m_test = 500;
  return cfg;
}

bool reports_equal(const MetricsReport& a, const MetricsReport& b) {
  auto eq = [](double x, double y) {
    return (std::isnan(x) && std::isnan(y)) || x == y;
  };
  return a.scenario == b.scenario && a.m0 == b.m0 && a.m1 == b.m1 &&
         a.seed == b.seed && eq(a.proj_err, b.proj_err) &&
         eq(a.fp_rate, b.fp_rate) && eq(a.recov_a, b.recov_a) &&
         eq(a.recov_v, b.recov_v) && eq(a.l1, b.l1) && eq(a.l2, b.l2) &&
         eq(a.mse, b.mse) && eq(a.e_inf, b.e_inf) &&
         eq(a.e_theta, b.e_theta) && eq(a.e_tau, b.e_tau) &&
         eq(a.alpha_hat, b.alpha_hat) && eq(a.trial_stat, b.trial_stat) &&
         a.near_rank1 == b.near_rank1 && a.spurious == b.spurious &&
         a.indeterminate == b.indeterminate &&
         a.query_count == b.query_count;
}

}  // namespace

TEST_CASE("generate_network") {
  SECTION("perturbed orthogonal design lands the singular value target") {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
      Scenario sc;
      sc.m0 = 10;
      sc.m1 = 3;
      sc.seed = seed;
      auto net = generate_network(sc);
      double stat_a = sv_stat(net.a());
      double stat_b = sv_stat(net.b());
      REQUIRE(stat_a >= 0.25);
      REQUIRE(stat_a <= 0.35);
      REQUIRE(stat_b >= 0.25);
      REQUIRE(stat_b <= 0.35);
    }
  }

  SECTION("zero perturbation gives exactly orthonormal columns") {
    Scenario sc;
    sc.m0 = 6;
    sc.m1 = 2;
    sc.seed = 9;
    sc.perturbation_target = 0.0;
    auto net = generate_network(sc);
    Matrix gram = net.a().transpose() * net.a();
    REQUIRE((gram - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-12);
    std::vector<Vector> cols;
    for (int i = 0; i < 6; ++i) cols.push_back(net.a().col(i));
    REQUIRE_THAT(frame_constants(cols).nu, WithinAbs(0.0, 1e-12));
  }

  SECTION("same seed serializes byte-identically") {
    Scenario sc;
    sc.m0 = 7;
    sc.m1 = 3;
    sc.seed = 123;
    nlohmann::json j1 = generate_network(sc);
    nlohmann::json j2 = generate_network(sc);
    REQUIRE(j1.dump() == j2.dump());
    sc.seed = 124;
    nlohmann::json j3 = generate_network(sc);
    REQUIRE(j1.dump() != j3.dump());
  }

  SECTION("unit-sphere design produces unit columns") {
    Scenario sc;
    sc.design = WeightDesign::UnitSphere;
    sc.m0 = 8;
    sc.m1 = 2;
    sc.seed = 77;
    auto net = generate_network(sc);
    for (int i = 0; i < 8; ++i)
      REQUIRE_THAT(net.a().col(i).norm(), WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("error_measures") {
  Scenario sc;
  sc.m0 = 8;
  sc.m1 = 2;
  sc.seed = 31;
  auto net = generate_network(sc);

  SECTION("exact truth scores perfectly") {
    ProfileSet ps;
    ps.vectors = net.profiles();
    ps.members_per_cluster.assign(10, 1);
    auto exact = exact_w(net);
    auto em = error_measures(ps, net, 0.05, &exact);
    REQUIRE(em.fp_rate == 0.0);
    REQUIRE(em.recov_a == 1.0);
    REQUIRE(em.recov_v == 1.0);
    REQUIRE_THAT(em.proj_err, WithinAbs(0.0, 1e-18));
    REQUIRE_THAT(em.trial_stat, WithinAbs(0.0, 1e-18));
  }

  SECTION("random profiles are all false positives") {
    ProfileSet ps;
    auto gen = rng::stream(33, rng::kMisc, 0);
    for (int j = 0; j < 10; ++j) ps.vectors.push_back(rng::unit_sphere(gen, 8));
    ps.members_per_cluster.assign(10, 1);
    auto em = error_measures(ps, net, 0.05);
    REQUIRE(em.fp_rate == 1.0);
  }
}

TEST_CASE("pipeline determinism and accounting") {
  Scenario sc;
  sc.m0 = 8;
  sc.m1 = 2;
  sc.seed = 5;
  sc.act = Activation::ShiftedSigmoid;
  PipelineConfig cfg = small_config();

  cfg.workers = 1;
  auto rep1 = run_pipeline(sc, cfg);
  cfg.workers = 4;
  auto rep2 = run_pipeline(sc, cfg);

  SECTION("identical reports across worker counts") {
    REQUIRE(reports_equal(rep1, rep2));
  }

  SECTION("query count matches the analytic formula") {
    const long d = 8;
    long hessians = cfg.m_x * (1 + d + d * (d + 1) / 2);
    long attribution = (sc.m0 + sc.m1) * 40 * (d + 1);
    long refit = cfg.mf_mult * (sc.m0 + sc.m1);
    REQUIRE(rep1.query_count ==
            static_cast<std::uint64_t>(hessians + attribution + refit));
  }

  SECTION("small scenario recovers most profiles") {
    REQUIRE(rep1.recov_a >= 0.8);
    REQUIRE(rep1.fp_rate <= 0.3);
    REQUIRE(rep1.near_rank1 + rep1.spurious + rep1.indeterminate ==
            cfg.restarts);
    REQUIRE(rep1.alpha_hat > 0.0);
    REQUIRE(rep1.nu > 0.0);
  }
}

TEST_CASE("active-subspace reduction path") {
  Scenario sc;
  sc.m0 = 4;
  sc.m1 = 2;
  sc.d = 8;
  sc.seed = 13;
  sc.act = Activation::ShiftedSigmoid;
  PipelineConfig cfg = small_config();
  cfg.reduce = true;
  cfg.reduce_m_x = 150;
  auto rep = run_pipeline(sc, cfg);
  REQUIRE(std::isfinite(rep.proj_err));
  REQUIRE(rep.recov_a >= 0.5);
}

TEST_CASE("report emission") {
  MetricsReport r;
  r.scenario = "pod/tanh";
  r.m0 = 4;
  r.m1 = 2;
  r.seed = 9;
  r.proj_err = 0.01;
  r.fp_rate = 0.0;
  r.recov_a = 1.0;
  r.recov_v = 0.5;
  r.l1 = 1.0;
  r.l2 = 1.0;
  r.mse = 1e-6;
  r.e_inf = 1e-3;
  r.alpha_hat = 0.5;
  r.trial_stat = 0.1;
  r.query_count = 1234;
  r.wallclock_sec = 1.5;

  SECTION("csv has a header, one row per report, and a mean row") {
    std::string path = "report_test.csv";
    emit_csv({r}, path);
    std::ifstream is(path);
    std::string line;
    int lines = 0;
    std::getline(is, line);
    REQUIRE(line.rfind("scenario,m0,m1,seed,proj_err", 0) == 0);
    ++lines;
    while (std::getline(is, line)) ++lines;
    REQUIRE(lines == 3);
    std::remove(path.c_str());
  }

  SECTION("json round-trips through the parser") {
    std::string path = "report_test.json";
    emit_json({r, r}, path);
    auto back = reports_from_file(path);
    REQUIRE(back.size() == 2);
    REQUIRE(reports_equal(back[0], r));
    std::remove(path.c_str());
  }

  SECTION("plot data files appear per metric and scenario") {
    emit_plot_data({r}, "plotdata_test");
    REQUIRE(std::filesystem::exists("plotdata_test/recov_a.pod_tanh.dat"));
    std::filesystem::remove_all("plotdata_test");
  }

  SECTION("trial filter masks refit errors of failed repetitions") {
    MetricsReport bad = r;
    bad.trial_stat = 2.0;  // fails the trial condition
    bad.mse = 1e3;
    auto mean = mean_report({r, bad});
    REQUIRE_THAT(mean.mse, WithinAbs(r.mse, 1e-18));
    REQUIRE_THAT(mean.recov_a, WithinAbs(0.5 * (r.recov_a + bad.recov_a),
                                         1e-15));
  }
}
