#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segfit/estimators.hpp"
#include "segfit/merging.hpp"
#include "segfit/model.hpp"
#include "segfit/synth.hpp"

namespace segfit {

/// A named fitting procedure run by the sweep.
struct Estimator {
  std::string name;    // command-line name, e.g. "greedy-2k"
  std::string label;   // plot-data file stem, e.g. "merging_2k"
  bool baseline = false;
  std::function<FitReport(const DataSet&)> fit;
};

/// GreedyMerging tuned to stop at exactly `pieces` intervals: tau = infinity,
/// k' = floor(pieces/2), gamma = pieces mod 2, so the stopping threshold is
/// 2k' + gamma = pieces and k' pairs are kept per round.
inline MergeConfig merge_config_for_pieces(std::size_t pieces, double noise_var) {
  MergeConfig cfg;
  cfg.k = std::max<std::size_t>(1, pieces / 2);
  cfg.tau = std::numeric_limits<double>::infinity();
  cfg.gamma = pieces > 2 * cfg.k ? static_cast<double>(pieces - 2 * cfg.k) : 0.0;
  cfg.noise_var = noise_var;
  return cfg;
}

inline const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names{"dp", "greedy-k", "greedy-2k", "greedy-4k", "bucket", "bucket-post"};
  return names;
}

/// Builds one of estimator_names() for true piece count k and noise variance s^2.
inline Estimator make_estimator(std::string_view name, std::size_t k, double noise_var, DpOptions dp = {}) {
  if (name == "dp")
    return {"dp", "exactdp", true, [k, dp](const DataSet& ds) { return fit_exact_dp(ds, k, dp); }};
  const std::pair<std::string_view, std::size_t> greedy[] = {{"greedy-k", 1}, {"greedy-2k", 2}, {"greedy-4k", 4}};
  for (const auto& [g, mult] : greedy) {
    if (name == g) {
      const auto cfg = merge_config_for_pieces(mult * k, noise_var);
      std::string label = mult == 1 ? "merging_k" : "merging_" + std::to_string(mult) + "k";
      return {std::string(g), label, false, [cfg](const DataSet& ds) { return greedy_merge(ds, cfg); }};
    }
  }
  if (name == "bucket")
    return {"bucket", "bucket", false, [k](const DataSet& ds) { return bucket_greedy_merge(ds, k, 0.0); }};
  if (name == "bucket-post")
    return {"bucket-post", "bucket_post", false,
            [k](const DataSet& ds) { return bucket_merge_postprocessed(ds, k, 0.0); }};
  throw ParameterError("unknown estimator '" + std::string(name) + "'");
}

/// One row of a plot-data file.
struct BenchRecord {
  std::size_t n = 0;
  std::string algorithm;
  std::string label;
  double mse_mean = 0.0;
  double mse_median = 0.0;
  std::optional<double> mse_ratio;
  double time_mean = 0.0;
  double time_median = 0.0;
  std::optional<double> time_ratio;
  std::size_t trials = 0;
  bool skipped = false;
  std::string note;
};

struct SweepOptions {
  ScenarioSpec scenario;  // n and seed are overridden per run
  std::vector<std::size_t> n_values;
  std::vector<Estimator> estimators;
  std::size_t trials = 20;
  std::size_t baseline_cap = 10000;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Runs every estimator on paired instances (trial t uses seed + t for all
/// estimators) and times only the fit call.
inline std::vector<BenchRecord> run_sweep(const SweepOptions& options) {
  if (options.trials < 1) throw ParameterError("sweep needs trials >= 1");
  if (options.n_values.empty()) throw ParameterError("sweep needs at least one n");
  for (std::size_t i = 1; i < options.n_values.size(); ++i)
    if (options.n_values[i] <= options.n_values[i - 1]) throw ParameterError("n values must be strictly ascending");
  if (options.estimators.empty()) throw ParameterError("sweep needs at least one estimator");

  constexpr double kMinTime = 1e-9;
  std::vector<BenchRecord> records;
  for (std::size_t n : options.n_values) {
    const std::size_t m = options.estimators.size();
    std::vector<std::vector<double>> mses(m), times(m);
    std::vector<char> skip(m, 0);
    for (std::size_t e = 0; e < m; ++e)
      skip[e] = options.estimators[e].baseline && n > options.baseline_cap;

    for (std::size_t t = 0; t < options.trials; ++t) {
      ScenarioSpec spec = options.scenario;
      spec.n = n;
      spec.seed = options.scenario.seed + t;
      const auto inst = generate(spec);
      for (std::size_t e = 0; e < m; ++e) {
        if (skip[e]) continue;
        const auto t0 = std::chrono::steady_clock::now();
        const auto report = options.estimators[e].fit(inst.dataset);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        times[e].push_back(std::max(secs, kMinTime));
        mses[e].push_back(mse(predict(report.model, inst.dataset), inst.truth_values));
      }
    }

    const std::size_t first = records.size();
    std::optional<std::size_t> base;
    for (std::size_t e = 0; e < m; ++e) {
      BenchRecord r;
      r.n = n;
      r.algorithm = options.estimators[e].name;
      r.label = options.estimators[e].label;
      r.trials = options.trials;
      if (skip[e]) {
        r.skipped = true;
        r.trials = 0;
        r.note = "baseline skipped above n=" + std::to_string(options.baseline_cap);
      } else {
        r.mse_mean = mean_of(mses[e]);
        r.mse_median = median_of(mses[e]);
        r.time_mean = mean_of(times[e]);
        r.time_median = median_of(times[e]);
        if (options.estimators[e].baseline && !base) base = first + e;
      }
      records.push_back(std::move(r));
    }
    for (std::size_t e = 0; e < m; ++e) {
      auto& r = records[first + e];
      if (r.skipped) continue;
      if (base) {
        r.mse_ratio = r.mse_mean / records[*base].mse_mean;
        r.time_ratio = records[*base].time_mean / r.time_mean;
      } else {
        r.note = "no baseline at this n; ratios absent";
      }
    }
  }
  return records;
}

/// Least-squares slope of log(time) against log(n).
inline double fit_runtime_slope(std::span<const double> ns, std::span<const double> times) {
  if (ns.size() != times.size()) throw StructuralError("n and time series differ in length");
  if (ns.size() < 3) throw ParameterError("runtime slope needs at least 3 points");
  const auto [lo, hi] = std::minmax_element(ns.begin(), ns.end());
  if (!(*lo > 0.0) || *hi / *lo < 8.0) throw ParameterError("runtime slope needs n values spanning at least 8x");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (!(times[i] > 0.0)) throw ParameterError("runtime slope needs positive times");
    lx.push_back(std::log(ns[i]));
    ly.push_back(std::log(times[i]));
  }
  const double mx = mean_of(lx), my = mean_of(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

/// Slope over the non-skipped records of one algorithm.
inline double fit_runtime_slope(std::span<const BenchRecord> records) {
  std::vector<double> ns, ts;
  for (const auto& r : records) {
    if (r.skipped) continue;
    ns.push_back(static_cast<double>(r.n));
    ts.push_back(r.time_mean);
  }
  return fit_runtime_slope(ns, ts);
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_number(*v) : "nan";
}

/// Whitespace-delimited table; skipped rows are left out.
inline void write_plot_data(std::ostream& os, std::span<const BenchRecord> records) {
  os << "n mse_mean mse_ratio time_mean time_ratio trials\n";
  for (const auto& r : records) {
    if (r.skipped) continue;
    os << r.n << ' ' << format_number(r.mse_mean) << ' ' << format_optional(r.mse_ratio) << ' '
       << format_number(r.time_mean) << ' ' << format_optional(r.time_ratio) << ' ' << r.trials << '\n';
  }
}

/// Groups records by label, preserving first-appearance order.
inline std::vector<std::pair<std::string, std::vector<BenchRecord>>> group_by_label(std::span<const BenchRecord> records) {
  std::vector<std::pair<std::string, std::vector<BenchRecord>>> groups;
  for (const auto& r : records) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == r.label; });
    if (it == groups.end()) {
      groups.push_back({r.label, {}});
      it = groups.end() - 1;
    }
    it->second.push_back(r);
  }
  return groups;
}

/// Writes <dir>/<prefix><label>.txt per algorithm. Returns the paths written.
inline std::vector<std::filesystem::path> write_plot_files(const std::filesystem::path& dir,
                                                           std::span<const BenchRecord> records,
                                                           const std::string& prefix = "") {
  std::vector<std::filesystem::path> paths;
  for (const auto& [label, rows] : group_by_label(records)) {
    auto path = dir / (prefix + label + ".txt");
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    write_plot_data(out, rows);
    if (!out) throw Error("failed writing " + path.string());
    paths.push_back(std::move(path));
  }
  return paths;
}

inline void print_summary(std::ostream& os, std::span<const BenchRecord> records) {
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %8s %12s %12s %10s %12s %12s %10s\n", "algorithm", "n", "mse_mean",
                "mse_median", "mse_ratio", "time_mean", "time_median", "time_ratio");
  os << line;
  for (const auto& r : records) {
    if (r.skipped) {
      std::snprintf(line, sizeof line, "%-12s %8zu   skipped (%s)\n", r.algorithm.c_str(), r.n, r.note.c_str());
    } else {
      std::snprintf(line, sizeof line, "%-12s %8zu %12.5g %12.5g %10s %12.5g %12.5g %10s\n", r.algorithm.c_str(), r.n,
                    r.mse_mean, r.mse_median, format_optional(r.mse_ratio).c_str(), r.time_mean, r.time_median,
                    format_optional(r.time_ratio).c_str());
    }
    os << line;
  }
}

}  // namespace segfit
