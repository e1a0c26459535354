#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "netrec/harness.hpp"

namespace netrec {

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"scenario", r.scenario},
                     {"m0", r.m0},
                     {"m1", r.m1},
                     {"seed", r.seed},
                     {"proj_err", r.proj_err},
                     {"fp_rate", r.fp_rate},
                     {"recov_a", r.recov_a},
                     {"recov_v", r.recov_v},
                     {"l1", r.l1},
                     {"l2", r.l2},
                     {"mse", r.mse},
                     {"e_inf", r.e_inf},
                     {"e_theta", r.e_theta},
                     {"e_tau", r.e_tau},
                     {"alpha_hat", r.alpha_hat},
                     {"trial_stat", r.trial_stat},
                     {"nu", r.nu},
                     {"c_f", r.c_f},
                     {"c_r", r.c_r},
                     {"near_rank1", r.near_rank1},
                     {"spurious", r.spurious},
                     {"indeterminate", r.indeterminate},
                     {"refit_error", r.refit_error},
                     {"query_count", r.query_count},
                     {"wallclock_sec", r.wallclock_sec}};
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.scenario = j.at("scenario").get<std::string>();
  r.m0 = j.at("m0").get<int>();
  r.m1 = j.at("m1").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  auto num = [&](const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                       : v.get<double>();
  };
  r.proj_err = num("proj_err");
  r.fp_rate = num("fp_rate");
  r.recov_a = num("recov_a");
  r.recov_v = num("recov_v");
  r.l1 = num("l1");
  r.l2 = num("l2");
  r.mse = num("mse");
  r.e_inf = num("e_inf");
  r.e_theta = num("e_theta");
  r.e_tau = num("e_tau");
  r.alpha_hat = num("alpha_hat");
  r.trial_stat = num("trial_stat");
  r.nu = num("nu");
  r.c_f = num("c_f");
  r.c_r = num("c_r");
  r.near_rank1 = j.at("near_rank1").get<int>();
  r.spurious = j.at("spurious").get<int>();
  r.indeterminate = j.at("indeterminate").get<int>();
  r.refit_error = j.at("refit_error").get<std::string>();
  r.query_count = j.at("query_count").get<std::uint64_t>();
  r.wallclock_sec = num("wallclock_sec");
  return r;
}

namespace detail {

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols = {
      "scenario",  "m0",        "m1",          "seed",      "proj_err",
      "fp_rate",   "recov_a",   "recov_v",     "l1",        "l2",
      "mse",       "e_inf",     "e_theta",     "e_tau",     "alpha_hat",
      "trial_stat", "nu",       "c_f",         "c_r",       "near_rank1",
      "spurious",  "indeterminate", "query_count", "wallclock_sec"};
  return cols;
}

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

inline std::vector<std::string> report_row(const MetricsReport& r) {
  return {r.scenario,
          std::to_string(r.m0),
          std::to_string(r.m1),
          std::to_string(r.seed),
          fmt(r.proj_err),
          fmt(r.fp_rate),
          fmt(r.recov_a),
          fmt(r.recov_v),
          fmt(r.l1),
          fmt(r.l2),
          fmt(r.mse),
          fmt(r.e_inf),
          fmt(r.e_theta),
          fmt(r.e_tau),
          fmt(r.alpha_hat),
          fmt(r.trial_stat),
          fmt(r.nu),
          fmt(r.c_f),
          fmt(r.c_r),
          std::to_string(r.near_rank1),
          std::to_string(r.spurious),
          std::to_string(r.indeterminate),
          std::to_string(r.query_count),
          fmt(r.wallclock_sec)};
}

}  // namespace detail

// Mean over repetitions. Refit errors are averaged only over repetitions
// that pass the trial condition (sum of recovery errors below 0.5) and
// completed the refit; everything else is a plain mean ignoring NaNs.
inline MetricsReport mean_report(const std::vector<MetricsReport>& reps,
                                 double trial_threshold = 0.5) {
  if (reps.empty()) throw std::invalid_argument("no reports");
  MetricsReport m = reps.front();
  m.seed = 0;
  m.refit_error.clear();
  auto avg = [&](auto field) {
    double acc = 0.0;
    int n = 0;
    for (const auto& r : reps) {
      double v = r.*field;
      if (!std::isnan(v)) {
        acc += v;
        ++n;
      }
    }
    return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
  };
  auto avg_refit = [&](auto field) {
    double acc = 0.0;
    int n = 0;
    for (const auto& r : reps) {
      double v = r.*field;
      if (!std::isnan(v) && r.refit_error.empty() &&
          (std::isnan(r.trial_stat) || r.trial_stat < trial_threshold)) {
        acc += v;
        ++n;
      }
    }
    return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
  };
  m.proj_err = avg(&MetricsReport::proj_err);
  m.fp_rate = avg(&MetricsReport::fp_rate);
  m.recov_a = avg(&MetricsReport::recov_a);
  m.recov_v = avg(&MetricsReport::recov_v);
  m.l1 = avg(&MetricsReport::l1);
  m.l2 = avg(&MetricsReport::l2);
  m.mse = avg_refit(&MetricsReport::mse);
  m.e_inf = avg_refit(&MetricsReport::e_inf);
  m.e_theta = avg_refit(&MetricsReport::e_theta);
  m.e_tau = avg_refit(&MetricsReport::e_tau);
  m.alpha_hat = avg(&MetricsReport::alpha_hat);
  m.trial_stat = avg(&MetricsReport::trial_stat);
  m.nu = avg(&MetricsReport::nu);
  m.c_f = avg(&MetricsReport::c_f);
  m.c_r = avg(&MetricsReport::c_r);
  int nr = 0, sp = 0, ind = 0;
  std::uint64_t q = 0;
  double wc = 0.0;
  for (const auto& r : reps) {
    nr += r.near_rank1;
    sp += r.spurious;
    ind += r.indeterminate;
    q += r.query_count;
    wc += r.wallclock_sec;
  }
  const int n = static_cast<int>(reps.size());
  m.near_rank1 = nr / n;
  m.spurious = sp / n;
  m.indeterminate = ind / n;
  m.query_count = q / n;
  m.wallclock_sec = wc / n;
  return m;
}

// CSV with one row per repetition plus a final mean row.
inline void emit_csv(const std::vector<MetricsReport>& reps,
                     const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  const auto& cols = detail::report_columns();
  for (size_t i = 0; i < cols.size(); ++i)
    os << cols[i] << (i + 1 < cols.size() ? "," : "\n");
  auto write_row = [&](const MetricsReport& r, const char* tag) {
    auto row = detail::report_row(r);
    if (tag) row[3] = tag;  // seed column doubles as the row tag
    for (size_t i = 0; i < row.size(); ++i)
      os << row[i] << (i + 1 < row.size() ? "," : "\n");
  };
  for (const auto& r : reps) write_row(r, nullptr);
  write_row(mean_report(reps), "mean");
  if (!os) throw IoError("failed writing " + path);
}

inline void emit_json(const std::vector<MetricsReport>& reps,
                      const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reps) j.push_back(r);
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("failed writing " + path);
}

inline std::vector<MetricsReport> reports_from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  nlohmann::json j;
  is >> j;
  std::vector<MetricsReport> out;
  for (const auto& item : j) out.push_back(report_from_json(item));
  return out;
}

// Plot-data files: for each metric one whitespace table with a row per
// architecture (x = "m0xm1" label, y = metric mean), grouped by scenario.
inline void emit_plot_data(const std::vector<MetricsReport>& reps,
                           const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::string, std::map<std::string, std::vector<MetricsReport>>>
      grouped;
  for (const auto& r : reps) {
    std::string arch = std::to_string(r.m0) + "x" + std::to_string(r.m1);
    grouped[r.scenario][arch].push_back(r);
  }
  const std::vector<std::pair<std::string, double MetricsReport::*>> metrics =
      {{"proj_err", &MetricsReport::proj_err},
       {"fp_rate", &MetricsReport::fp_rate},
       {"recov_a", &MetricsReport::recov_a},
       {"recov_v", &MetricsReport::recov_v},
       {"l1", &MetricsReport::l1},
       {"l2", &MetricsReport::l2},
       {"mse", &MetricsReport::mse},
       {"e_inf", &MetricsReport::e_inf}};
  for (const auto& [name, field] : metrics) {
    for (const auto& [scen, archs] : grouped) {
      std::string tag = scen;
      for (auto& ch : tag)
        if (ch == '/') ch = '_';
      std::ofstream os(dir + "/" + name + "." + tag + ".dat");
      if (!os) throw IoError("cannot write plot data in " + dir);
      os << "# arch " << name << " (" << scen << ")\n";
      for (const auto& [arch, rs] : archs)
        os << arch << " " << detail::fmt(mean_report(rs).*field) << "\n";
    }
  }
}

}  // namespace netrec
