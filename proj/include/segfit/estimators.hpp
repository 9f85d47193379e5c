#pragma once

#include <chrono>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "segfit/linalg.hpp"
#include "segfit/model.hpp"

namespace segfit {

/// Per-piece least-squares refit of a fixed partition.
inline FitReport fit_on_partition(const DataSet& ds, const Partition& partition) {
  if (partition.n() != ds.size()) throw StructuralError("partition does not cover the dataset");
  std::vector<std::vector<double>> thetas;
  thetas.reserve(partition.piece_count());
  for (std::size_t p = 0; p < partition.piece_count(); ++p)
    thetas.push_back(least_squares(ds, partition.interval(p)).theta);
  PiecewiseLinearModel model(partition, std::move(thetas));
  const double sse = sse_against_responses(model, ds);
  return FitReport{std::move(model), sse, std::nullopt, 0.0, 0, {}};
}

/// Best j-piece SSE of the first i points, with predecessor cut points.
struct DpTable {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> a;            // (n+1) x (k+1)
  std::vector<std::size_t> back;    // same shape

  DpTable(std::size_t n_, std::size_t k_)
      : n(n_), k(k_), a((n_ + 1) * (k_ + 1), std::numeric_limits<double>::infinity()),
        back((n_ + 1) * (k_ + 1), 0) {
    at(0, 0) = 0.0;
  }

  double& at(std::size_t i, std::size_t j) { return a[i * (k + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * (k + 1) + j]; }
  std::size_t& prev(std::size_t i, std::size_t j) { return back[i * (k + 1) + j]; }
  std::size_t prev(std::size_t i, std::size_t j) const { return back[i * (k + 1) + j]; }

  /// Relaxes every end b from start a with interval error e = err(a, b).
  /// Starts are pushed in increasing order with a strict comparison, so ties
  /// resolve to the smallest predecessor.
  void relax(std::size_t a, std::size_t b, double e) {
    const std::size_t jmax = std::min(k, a + 1);
    const std::size_t jmin = a == 0 ? 1 : 2;
    const double* from = &a_row(a)[0];
    double* to = &a_row(b)[0];
    std::size_t* bk = &back[b * (k + 1)];
    for (std::size_t j = jmin; j <= jmax; ++j) {
      const double cand = from[j - 1] + e;
      if (cand < to[j]) {
        to[j] = cand;
        bk[j] = a;
      }
    }
  }

  /// Cut points of the optimal `pieces`-piece solution for all n points.
  Partition recover(std::size_t pieces) const {
    std::vector<std::size_t> bounds(pieces + 1);
    std::size_t i = n;
    for (std::size_t j = pieces; j > 0; --j) {
      bounds[j] = i;
      i = prev(i, j);
    }
    bounds[0] = i;
    return Partition(std::move(bounds));
  }

 private:
  double* a_row(std::size_t i) { return &a[i * (k + 1)]; }
};

enum class DpMode {
  kAuto,       // table when n <= table_cap, streaming otherwise
  kTable,      // materialise the O(n^2) error table first
  kStreaming,  // one error sweep per start, O(n k) memory
};

struct DpOptions {
  DpMode mode = DpMode::kAuto;
  std::size_t table_cap = kDefaultTableCap;
  unsigned threads = 1;
};

/// Fills the exact DP. Both modes feed identical err(a, b) values in the same
/// order, so they return identical tables.
inline DpTable solve_dp(const DataSet& ds, std::size_t k, const DpOptions& options = {}) {
  const std::size_t n = ds.size();
  if (k < 1 || k > n) throw ParameterError("need 1 <= k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  DpTable dp(n, k);
  const bool use_table =
      options.mode == DpMode::kTable || (options.mode == DpMode::kAuto && n <= options.table_cap);
  if (use_table) {
    const auto table = build_error_table(ds, {options.table_cap, options.threads});
    for (std::size_t a = 0; a < n; ++a) {
      const auto row = table.row(a);
      for (std::size_t b = a + 1; b <= n; ++b) dp.relax(a, b, row[b - a - 1]);
    }
  } else {
    for (std::size_t a = 0; a < n; ++a) {
      ErrorSweep sweep(ds, a);
      for (std::size_t b = a + 1; b <= n; ++b) dp.relax(a, b, sweep.advance());
    }
  }
  return dp;
}

/// Least-squares k-piece fit over all index partitions, O(n^2 (d^2 + k)).
inline FitReport fit_exact_dp(const DataSet& ds, std::size_t k, const DpOptions& options = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dp = solve_dp(ds, k, options);
  auto report = fit_on_partition(ds, dp.recover(k));
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/// Optimal `pieces`-piece fit whose cuts lie in `allowed` (plus 0 and n).
///
/// Candidate segments are unions of consecutive chunks between allowed cuts;
/// their normal equations are accumulated chunk by chunk and solved directly.
inline FitReport fit_restricted_dp(const DataSet& ds, std::span<const std::size_t> allowed, std::size_t pieces) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = ds.size();
  std::vector<std::size_t> cuts{0};
  for (std::size_t b : allowed) {
    if (b == 0 || b >= n) throw ParameterError("allowed breakpoints must lie in [1, n-1]");
    if (b <= cuts.back()) throw ParameterError("allowed breakpoints must be strictly increasing");
    cuts.push_back(b);
  }
  cuts.push_back(n);
  const std::size_t chunks = cuts.size() - 1;
  if (pieces < 1 || pieces > chunks)
    throw ParameterError("cannot form " + std::to_string(pieces) + " pieces from " + std::to_string(chunks) + " chunks");

  std::vector<NormalEquations> chunk_ne;
  chunk_ne.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) chunk_ne.push_back(NormalEquations::over(ds, {cuts[c], cuts[c + 1]}));

  // DP over chunk positions; position q means "first cuts[q] points".
  DpTable dp(chunks, pieces);
  const std::size_t d = ds.dim();
  for (std::size_t p = 0; p < chunks; ++p) {
    NormalEquations acc(d);
    for (std::size_t q = p + 1; q <= chunks; ++q) {
      acc += chunk_ne[q - 1];
      const auto theta = solve_ridge(acc, ds.ridge());
      // ||y - X theta||^2 = y^T y - 2 theta^T b + theta^T G theta
      double quad = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double t = 0.0;
        for (std::size_t j = 0; j < d; ++j) t += acc.gram(i, j) * theta[j];
        quad += theta[i] * t;
      }
      const double sse = std::max(0.0, acc.yty - 2.0 * dot(theta, acc.xty) + quad);
      dp.relax(p, q, sse);
    }
  }
  const auto chosen = dp.recover(pieces);
  std::vector<std::size_t> bounds;
  bounds.reserve(pieces + 1);
  for (std::size_t q : chosen.bounds()) bounds.push_back(cuts[q]);
  auto report = fit_on_partition(ds, Partition(std::move(bounds)));
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace segfit
