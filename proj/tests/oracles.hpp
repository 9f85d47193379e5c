#pragma once

// Independent reference implementations for the tests. Nothing here reuses
// the library's solvers: least squares goes through Eigen's pivoted QR.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "segfit/model.hpp"
#include "segfit/synth.hpp"

namespace oracle {

using segfit::DataSet;
using segfit::Interval;

inline Eigen::MatrixXd rows_of(const DataSet& ds, Interval iv) {
  Eigen::MatrixXd x(iv.size(), ds.dim());
  for (std::size_t i = iv.begin; i < iv.end; ++i)
    for (std::size_t j = 0; j < ds.dim(); ++j) x(i - iv.begin, j) = ds.row(i)[j];
  return x;
}

inline Eigen::VectorXd responses_of(const DataSet& ds, Interval iv) {
  Eigen::VectorXd y(iv.size());
  for (std::size_t i = iv.begin; i < iv.end; ++i) y(i - iv.begin) = ds.y(i);
  return y;
}

/// Least-squares coefficients via column-pivoted QR.
inline Eigen::VectorXd theta(const DataSet& ds, Interval iv) {
  return rows_of(ds, iv).colPivHouseholderQr().solve(responses_of(ds, iv));
}

inline double sse(const DataSet& ds, Interval iv) {
  const auto x = rows_of(ds, iv);
  const auto y = responses_of(ds, iv);
  const Eigen::VectorXd r = y - x * x.colPivHouseholderQr().solve(y);
  return r.squaredNorm();
}

/// Caches interval SSEs for the enumerators.
class SseCache {
 public:
  explicit SseCache(const DataSet& ds) : ds_(ds) {}
  double operator()(std::size_t a, std::size_t b) {
    auto [it, fresh] = memo_.try_emplace({a, b}, 0.0);
    if (fresh) it->second = sse(ds_, {a, b});
    return it->second;
  }

 private:
  const DataSet& ds_;
  std::map<std::pair<std::size_t, std::size_t>, double> memo_;
};

/// Minimum total SSE over every way of choosing `pieces - 1` cuts from
/// `candidates` (ascending, inside [1, n-1]).
inline double best_over_cuts(const DataSet& ds, const std::vector<std::size_t>& candidates, std::size_t pieces) {
  SseCache err(ds);
  const std::size_t n = ds.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> chosen;
  std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t from, std::size_t last, double acc) {
    if (chosen.size() + 1 == pieces) {
      best = std::min(best, acc + err(last, n));
      return;
    }
    for (std::size_t c = from; c < candidates.size(); ++c) {
      chosen.push_back(candidates[c]);
      rec(c + 1, candidates[c], acc + err(last, candidates[c]));
      chosen.pop_back();
    }
  };
  rec(0, 0, 0.0);
  return best;
}

/// Exhaustive search over all C(n-1, k-1) placements.
inline double best_partition_sse(const DataSet& ds, std::size_t k) {
  std::vector<std::size_t> all;
  for (std::size_t b = 1; b < ds.size(); ++b) all.push_back(b);
  return best_over_cuts(ds, all, k);
}

/// Gaussian rows sorted by column 0, y = x . theta + noise.
inline DataSet random_dataset(segfit::SplitMix64& rng, std::size_t n, std::size_t d, double sigma = 1.0) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& r : rows)
    for (double& v : r) v = rng.normal();
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a[0] < b[0]; });
  std::vector<double> th(d);
  for (double& t : th) t = rng.uniform(-1.0, 1.0);
  segfit::Matrix x(n, d);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rows[i][j];
    y[i] = segfit::dot(th, rows[i]) + sigma * rng.normal();
  }
  return DataSet(std::move(x), std::move(y));
}

inline double squared_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

/// |a - b| relative to the larger magnitude, with an absolute floor.
inline double rel_diff(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

}  // namespace oracle
