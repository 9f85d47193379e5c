#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "segfit/bench.hpp"
#include "segfit/csv.hpp"
#include "segfit/document.hpp"
#include "segfit/estimators.hpp"
#include "segfit/merging.hpp"
#include "segfit/synth.hpp"

namespace segfit::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kIo = 2,     // unreadable input, unwritable output
  kUsage = 3,  // invalid flags or parameters
  kData = 4,   // non-finite or otherwise unusable data
};

namespace detail {

inline unsigned threads_from(std::optional<unsigned> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SEGFIT_THREADS")) {
    try {
      return static_cast<unsigned>(std::stoul(env));
    } catch (...) {
    }
  }
  return 0;
}

class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

struct FitArgs {
  std::string input;
  std::string algo = "dp";
  std::size_t k = 0;
  double tau = 1.0;
  double gamma = 2.0;
  std::optional<double> noise_var;
  bool estimate_noise = false;
  std::optional<std::size_t> partition_col;
  std::optional<std::size_t> y_col;
  bool header = false;
  bool time_index = false;
  std::string out;
  std::string predictions;
  std::optional<unsigned> threads;
  std::size_t table_cap = kDefaultTableCap;
};

inline int cmd_fit(const FitArgs& a, std::ostream& out) {
  if (a.algo == "greedy" && a.noise_var && a.estimate_noise)
    throw UsageError("--noise-var and --estimate-noise are mutually exclusive");
  if (a.algo == "greedy" && !a.noise_var && !a.estimate_noise)
    throw UsageError("greedy needs --noise-var or --estimate-noise");
  if (a.k < 1) throw UsageError("--k must be >= 1");

  const auto table = read_csv_file(a.input, a.header);
  const auto data = ingest(table, {a.y_col, a.partition_col, a.time_index});
  const auto& ds = data.dataset;

  nlohmann::json config = {{"k", a.k}, {"partition_col", ds.partition_col()}, {"time_index", a.time_index},
                           {"y_col", a.y_col ? nlohmann::json(*a.y_col) : nlohmann::json("last")}};
  const auto t0 = std::chrono::steady_clock::now();
  FitReport report = [&] {
    if (a.algo == "dp") {
      if (a.k > ds.size()) throw UsageError("--k exceeds the number of rows");
      return fit_exact_dp(ds, a.k, {DpMode::kAuto, a.table_cap, threads_from(a.threads)});
    }
    if (a.algo == "greedy") {
      MergeConfig cfg{a.k, a.tau, a.gamma, a.noise_var ? *a.noise_var : estimate_noise_variance(ds)};
      config["tau"] = a.tau;
      config["gamma"] = a.gamma;
      config["noise_var"] = cfg.noise_var;
      config["noise_var_estimated"] = !a.noise_var.has_value();
      return greedy_merge(ds, cfg);
    }
    config["gamma"] = a.gamma;
    if (ds.size() < 2) throw UsageError("bucket merging needs at least 2 rows");
    if (a.algo == "bucket") return bucket_greedy_merge(ds, a.k, a.gamma);
    return bucket_merge_postprocessed(ds, a.k, a.gamma);
  }();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto doc = make_document(ds, report, a.algo, config);
  if (!a.out.empty()) write_text(a.out, dump_document(doc));
  if (!a.predictions.empty()) {
    const auto sorted_pred = predict(report.model, ds);
    std::vector<double> original(sorted_pred.size());
    for (std::size_t r = 0; r < sorted_pred.size(); ++r) original[data.permutation[r]] = sorted_pred[r];
    std::ostringstream os;
    write_column_csv(os, original, "");
    write_text(a.predictions, os.str());
  }

  out << "algo=" << a.algo << '\n'
      << "n=" << ds.size() << '\n'
      << "d=" << ds.dim() << '\n'
      << "pieces=" << report.model.piece_count() << '\n'
      << "sse=" << format_exact(report.sse) << '\n'
      << "wall_time=" << wall << '\n'
      << "iterations=" << report.iterations << '\n';
  if (config.contains("noise_var")) out << "noise_var=" << format_exact(config["noise_var"].get<double>()) << '\n';
  for (const auto& w : report.warnings) out << "warning=" << w << '\n';
  return kOk;
}

struct SynthArgs {
  std::string kind = "constant";
  std::size_t k = 10;
  std::size_t n = 1000;
  std::size_t d = 1;
  std::optional<std::size_t> degree;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  double budget = 0.0;
  std::string out;
  std::string truth;
  bool header = false;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  std::ostringstream data, truth;
  if (a.kind == "series") {
    const auto series = generate_trend_series(a.n, a.k, a.sigma, a.seed);
    write_column_csv(data, series.y, a.header ? "y" : "");
    write_column_csv(truth, series.trend, a.header ? "f" : "");
  } else {
    const auto kind = parse_scenario_kind(a.kind);
    if (!kind) throw UsageError("unknown --kind '" + a.kind + "'");
    ScenarioSpec spec{*kind, a.k, a.n, a.d, a.sigma, a.seed, a.budget};
    if (*kind == ScenarioKind::kPiecewisePolynomial) spec.d = a.degree.value_or(a.d);
    const auto inst = generate(spec);
    write_dataset_csv(data, inst.dataset, a.header);
    write_column_csv(truth, inst.truth_values, a.header ? "f" : "");
    if (*kind == ScenarioKind::kMisspecified) out << "opt_k=" << format_exact(inst.opt_k) << '\n';
  }
  write_text(a.out, data.str());
  if (!a.truth.empty()) write_text(a.truth, truth.str());
  out << "wrote=" << a.out << '\n';
  if (!a.truth.empty()) out << "wrote=" << a.truth << '\n';
  return kOk;
}

struct BenchArgs {
  std::string kind = "constant";
  std::size_t k = 10;
  std::size_t d = 1;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  double budget = 0.0;
  std::vector<std::size_t> n_values;
  std::vector<std::string> algos{"dp", "greedy-k", "greedy-2k", "greedy-4k"};
  std::size_t trials = 20;
  std::size_t dp_cap = 10000;
  std::string out_dir;
  std::string prefix;
  std::optional<unsigned> threads;
};

inline int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const auto kind = parse_scenario_kind(a.kind);
  if (!kind) throw UsageError("unknown --kind '" + a.kind + "'");
  SweepOptions opt;
  opt.scenario = ScenarioSpec{*kind, a.k, 0, a.d, a.sigma, a.seed, a.budget};
  opt.n_values = a.n_values;
  opt.trials = a.trials;
  opt.baseline_cap = a.dp_cap;
  const DpOptions dp{DpMode::kAuto, kDefaultTableCap, threads_from(a.threads)};
  for (const auto& name : a.algos) opt.estimators.push_back(make_estimator(name, a.k, a.sigma * a.sigma, dp));
  for (std::size_t n : a.n_values) {
    opt.scenario.n = n;
    opt.scenario.validate();
  }

  std::error_code ec;
  std::filesystem::create_directories(a.out_dir, ec);
  if (ec || !std::filesystem::is_directory(a.out_dir)) throw IoError("cannot create output directory '" + a.out_dir + "'");
  {
    const auto probe = std::filesystem::path(a.out_dir) / ".segfit_write_probe";
    std::ofstream p(probe);
    if (!p) throw IoError("output directory '" + a.out_dir + "' is not writable");
    p.close();
    std::filesystem::remove(probe, ec);
  }

  const auto records = run_sweep(opt);
  std::vector<std::filesystem::path> paths;
  try {
    paths = write_plot_files(a.out_dir, records, a.prefix);
  } catch (const Error& e) {
    throw IoError(e.what());
  }
  print_summary(out, records);
  for (const auto& p : paths) out << "wrote=" << p.string() << '\n';
  return kOk;
}

}  // namespace detail

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segmented (piecewise linear) regression: exact DP and greedy merging estimators."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  detail::FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a k-piecewise linear model to a CSV file");
  fit_cmd->add_option("input", fit.input, "CSV file (feature columns and y)")->required();
  fit_cmd->add_option("--algo", fit.algo, "dp | greedy | bucket | bucket-post")
      ->check(CLI::IsMember({"dp", "greedy", "bucket", "bucket-post"}));
  fit_cmd->add_option("--k", fit.k, "Target number of pieces")->required();
  fit_cmd->add_option("--tau", fit.tau, "GreedyMerging tau (> 0)");
  fit_cmd->add_option("--gamma", fit.gamma, "Extra piece allowance gamma (>= 0)");
  fit_cmd->add_option("--noise-var", fit.noise_var, "Noise variance s^2 for greedy");
  fit_cmd->add_flag("--estimate-noise", fit.estimate_noise, "Estimate s^2 from first differences of y");
  fit_cmd->add_option("--partition-col", fit.partition_col, "Feature column the pieces are defined along");
  fit_cmd->add_option("--y-col", fit.y_col, "Response column in the CSV (default: last)");
  fit_cmd->add_flag("--header", fit.header, "First CSV line is a header");
  fit_cmd->add_flag("--time-index", fit.time_index, "Use features (1, t) with t the row number");
  fit_cmd->add_option("--out", fit.out, "Write the model document (JSON) here");
  fit_cmd->add_option("--predictions", fit.predictions, "Write fitted values in input row order here");
  fit_cmd->add_option("--threads", fit.threads, "Worker threads (default: SEGFIT_THREADS or all cores)");
  fit_cmd->add_option("--dp-table-cap", fit.table_cap, "Largest n for which the DP stores its O(n^2) error table");

  detail::SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--kind", synth.kind, "constant | linear | poly | misspecified | series");
  synth_cmd->add_option("--k", synth.k, "Number of true pieces");
  synth_cmd->add_option("--n", synth.n, "Number of samples");
  synth_cmd->add_option("--d", synth.d, "Feature dimension");
  synth_cmd->add_option("--degree", synth.degree, "Polynomial degree (poly kind)");
  synth_cmd->add_option("--sigma", synth.sigma, "Gaussian noise standard deviation");
  synth_cmd->add_option("--seed", synth.seed, "Random seed");
  synth_cmd->add_option("--budget", synth.budget, "Mean-square misspecification (misspecified kind)");
  synth_cmd->add_option("--out", synth.out, "Dataset CSV path")->required();
  synth_cmd->add_option("--truth", synth.truth, "Ground-truth values CSV path");
  synth_cmd->add_flag("--header", synth.header, "Write header rows");

  detail::BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Sweep n and write plot-data files");
  bench_cmd->add_option("--kind", bench.kind, "constant | linear | poly | misspecified");
  bench_cmd->add_option("--k", bench.k, "Number of true pieces");
  bench_cmd->add_option("--d", bench.d, "Feature dimension (degree for poly)");
  bench_cmd->add_option("--sigma", bench.sigma, "Gaussian noise standard deviation");
  bench_cmd->add_option("--seed", bench.seed, "Base seed; trial t uses seed + t");
  bench_cmd->add_option("--budget", bench.budget, "Mean-square misspecification (misspecified kind)");
  bench_cmd->add_option("--n", bench.n_values, "Ascending sample sizes")->required()->delimiter(',');
  bench_cmd->add_option("--algos", bench.algos, "Estimators: dp, greedy-k, greedy-2k, greedy-4k, bucket, bucket-post")
      ->delimiter(',');
  bench_cmd->add_option("--trials", bench.trials, "Trials per (n, algorithm)");
  bench_cmd->add_option("--dp-cap", bench.dp_cap, "Skip the exact DP above this n");
  bench_cmd->add_option("--out-dir", bench.out_dir, "Directory for plot-data files")->required();
  bench_cmd->add_option("--prefix", bench.prefix, "File name prefix");
  bench_cmd->add_option("--threads", bench.threads, "Worker threads for the DP error table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fit_cmd) return detail::cmd_fit(fit, out);
    if (*synth_cmd) return detail::cmd_synth(synth, out);
    if (*bench_cmd) return detail::cmd_bench(bench, out);
  } catch (const CsvError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const detail::IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const StructuralError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const detail::UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CapacityError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace segfit::cli
