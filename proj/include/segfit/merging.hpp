#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segfit/estimators.hpp"
#include "segfit/linalg.hpp"
#include "segfit/model.hpp"

namespace segfit {

/// ceil(x) that ignores floating-point fuzz just above an integer, so that
/// (1 + 1/3) * 3 counts as 4 and not 5.
inline std::size_t ceil_count(double x) {
  return static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, std::abs(x))));
}

/// Tuning for GreedyMerging. tau may be +infinity (1/tau = 0).
struct MergeConfig {
  std::size_t k = 1;
  double tau = 1.0;
  double gamma = 2.0;
  double noise_var = 0.0;  // s^2 = E[eps_i^2]

  void validate() const {
    if (k < 1) throw ParameterError("merge config needs k >= 1");
    if (!(tau > 0.0)) throw ParameterError("merge config needs tau > 0");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParameterError("merge config needs finite gamma >= 0");
    if (!(noise_var >= 0.0) || !std::isfinite(noise_var))
      throw ParameterError("merge config needs finite noise variance >= 0");
  }

  /// Loop runs while the interval count exceeds ceil((2 + 2/tau) k + gamma).
  std::size_t stop_threshold() const { return ceil_count((2.0 + 2.0 / tau) * static_cast<double>(k) + gamma); }
  /// ceil((1 + 1/tau) k) pairs with the largest errors stay unmerged.
  std::size_t keep_count() const { return ceil_count((1.0 + 1.0 / tau) * static_cast<double>(k)); }
};

/// Two neighbouring intervals that may be merged.
struct CandidatePair {
  std::size_t left = 0;   // interval index in the current partition
  std::size_t right = 0;
  Interval merged;
  double error = 0.0;
};

struct Pairing {
  std::vector<CandidatePair> pairs;
  std::optional<std::size_t> carryover;  // unpaired last interval when the count is odd
};

/// Pairs (I1, I2), (I3, I4), ... in index order; errors are left at 0.
inline Pairing pair_candidates(const Partition& partition) {
  Pairing out;
  const std::size_t m = partition.piece_count();
  out.pairs.reserve(m / 2);
  for (std::size_t u = 0; u + 1 < m; u += 2)
    out.pairs.push_back({u, u + 1, {partition.interval(u).begin, partition.interval(u + 1).end}, 0.0});
  if (m % 2 == 1) out.carryover = m - 1;
  return out;
}

/// Larger error first; equal errors go to the smaller start index.
inline bool ranks_before(const CandidatePair& a, const CandidatePair& b) {
  if (a.error != b.error) return a.error > b.error;
  return a.merged.begin < b.merged.begin;
}

struct Selection {
  std::vector<std::size_t> kept;    // candidate indices, ascending
  std::vector<std::size_t> merged;  // candidate indices, ascending
};

/// Keeps the `count` largest-error candidates (linear-time selection).
inline Selection select_top_errors(std::span<const CandidatePair> candidates, std::size_t count) {
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Selection sel;
  if (count >= candidates.size()) {
    sel.kept = std::move(order);
    return sel;
  }
  auto by_rank = [&](std::size_t a, std::size_t b) { return ranks_before(candidates[a], candidates[b]); };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(), by_rank);
  sel.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  sel.merged.assign(order.begin() + static_cast<std::ptrdiff_t>(count), order.end());
  std::sort(sel.kept.begin(), sel.kept.end());
  std::sort(sel.merged.begin(), sel.merged.end());
  return sel;
}

/// Noise variance heuristic: mean squared first difference of y, halved.
/// Only meaningful when the signal varies slowly relative to the noise.
inline double estimate_noise_variance(const DataSet& ds) {
  if (ds.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 1; i < ds.size(); ++i) {
    const double diff = ds.y(i) - ds.y(i - 1);
    s += diff * diff;
  }
  return s / static_cast<double>(ds.size() - 1) / 2.0;
}

namespace detail {

struct Piece {
  Interval iv;
  NormalEquations ne;
};

inline std::vector<Piece> singleton_pieces(const DataSet& ds) {
  std::vector<Piece> pieces;
  pieces.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) pieces.push_back({{i, i + 1}, NormalEquations::over(ds, {i, i + 1})});
  return pieces;
}

inline Partition to_partition(const std::vector<Piece>& pieces) {
  std::vector<std::size_t> bounds{0};
  bounds.reserve(pieces.size() + 1);
  for (const auto& p : pieces) {
    if (p.iv.begin != bounds.back()) throw StructuralError("merged intervals are not contiguous");
    bounds.push_back(p.iv.end);
  }
  return Partition(std::move(bounds));
}

/// Fits every neighbouring pair. `criterion(sse, size)` gives e_u.
template <class Criterion>
Pairing score_pairs(const DataSet& ds, const std::vector<Piece>& pieces, std::vector<NormalEquations>& merged_ne,
                    Criterion&& criterion) {
  Pairing pairing;
  const std::size_t m = pieces.size();
  pairing.pairs.reserve(m / 2);
  merged_ne.clear();
  merged_ne.reserve(m / 2);
  for (std::size_t u = 0; u + 1 < m; u += 2) {
    NormalEquations ne = pieces[u].ne;
    ne += pieces[u + 1].ne;
    const Interval iv{pieces[u].iv.begin, pieces[u + 1].iv.end};
    const auto theta = solve_ridge(ne, ds.ridge());
    const double sse = residual_sse(ds, iv, theta);
    pairing.pairs.push_back({u, u + 1, iv, criterion(sse, iv.size())});
    merged_ne.push_back(std::move(ne));
  }
  if (m % 2 == 1) pairing.carryover = m - 1;
  return pairing;
}

/// If nothing would merge, merges the lowest-ranked candidate so that every
/// iteration shrinks the partition.
inline void ensure_progress(std::span<const CandidatePair> candidates, std::vector<char>& merge) {
  if (candidates.empty() || std::find(merge.begin(), merge.end(), char{1}) != merge.end()) return;
  std::size_t last = 0;
  for (std::size_t u = 1; u < candidates.size(); ++u)
    if (ranks_before(candidates[last], candidates[u])) last = u;
  merge[last] = 1;
}

inline std::vector<Piece> apply_merges(std::vector<Piece>&& pieces, const Pairing& pairing,
                                       const std::vector<char>& merge, std::vector<NormalEquations>&& merged_ne) {
  std::vector<Piece> next;
  next.reserve(pieces.size());
  for (std::size_t u = 0; u < pairing.pairs.size(); ++u) {
    const auto& c = pairing.pairs[u];
    if (merge[u]) {
      next.push_back({c.merged, std::move(merged_ne[u])});
    } else {
      next.push_back(std::move(pieces[c.left]));
      next.push_back(std::move(pieces[c.right]));
    }
  }
  if (pairing.carryover) next.push_back(std::move(pieces[*pairing.carryover]));
#ifndef NDEBUG
  (void)to_partition(next);  // throws unless the pieces still tile [0, n)
#endif
  return next;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// GreedyMerging: repeatedly pairs neighbouring intervals, keeps the pairs
/// whose merged fit has the largest bias-corrected error
/// e_u = SSE - s^2 |I| unmerged, and merges the rest. Stops once at most
/// ceil((2 + 2/tau) k + gamma) intervals remain. O(n d^2 log(n / gamma)).
inline FitReport greedy_merge(const DataSet& ds, const MergeConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t threshold = config.stop_threshold();
  const std::size_t keep = config.keep_count();
  const double s2 = config.noise_var;

  auto pieces = detail::singleton_pieces(ds);
  std::vector<NormalEquations> merged_ne;
  std::size_t iterations = 0;
  while (pieces.size() > threshold) {
    auto pairing = detail::score_pairs(ds, pieces, merged_ne, [s2](double sse, std::size_t size) {
      return sse - s2 * static_cast<double>(size);
    });
    const auto sel = select_top_errors(pairing.pairs, keep);
    std::vector<char> merge(pairing.pairs.size(), 0);
    for (std::size_t u : sel.merged) merge[u] = 1;
    detail::ensure_progress(pairing.pairs, merge);
    pieces = detail::apply_merges(std::move(pieces), pairing, merge, std::move(merged_ne));
    ++iterations;
  }

  auto report = fit_on_partition(ds, detail::to_partition(pieces));
  report.iterations = iterations;
  report.wall_time = detail::seconds_since(t0);
  return report;
}

/// Piece budget of BucketGreedyMerge: (2(k+1) + gamma) * ceil(log2 n).
inline double bucket_piece_budget(std::size_t n, std::size_t k, double gamma) {
  const auto log2n = static_cast<double>(std::bit_width(n - 1));
  return (2.0 * static_cast<double>(k + 1) + gamma) * log2n;
}

/// Bucket index of a merged interval: floor(log2 |I|).
inline std::size_t bucket_of(std::size_t length) { return static_cast<std::size_t>(std::bit_width(length)) - 1; }

/// BucketGreedyMerge: like greedy_merge but needs no noise variance. The
/// criterion is the mean squared residual of the merged fit, and candidates
/// only compete against merged intervals of similar length (same
/// floor(log2 |I|) bucket); each bucket keeps its k+1 largest errors.
inline FitReport bucket_greedy_merge(const DataSet& ds, std::size_t k, double gamma) {
  if (ds.size() < 2) throw ParameterError("bucket merging needs n >= 2");
  if (k < 1) throw ParameterError("bucket merging needs k >= 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParameterError("bucket merging needs finite gamma >= 0");
  const auto t0 = std::chrono::steady_clock::now();
  const double budget = bucket_piece_budget(ds.size(), k, gamma);

  auto pieces = detail::singleton_pieces(ds);
  std::vector<NormalEquations> merged_ne;
  std::size_t iterations = 0;
  std::vector<std::vector<std::size_t>> buckets;
  std::vector<CandidatePair> members;
  while (static_cast<double>(pieces.size()) > budget) {
    auto pairing = detail::score_pairs(ds, pieces, merged_ne, [](double sse, std::size_t size) {
      return sse / static_cast<double>(size);
    });
    buckets.assign(64, {});
    for (std::size_t u = 0; u < pairing.pairs.size(); ++u)
      buckets[bucket_of(pairing.pairs[u].merged.size())].push_back(u);

    std::vector<char> merge(pairing.pairs.size(), 0);
    for (const auto& bucket : buckets) {
      if (bucket.size() <= k + 1) continue;
      members.clear();
      for (std::size_t u : bucket) members.push_back(pairing.pairs[u]);
      const auto sel = select_top_errors(members, k + 1);
      for (std::size_t i : sel.merged) merge[bucket[i]] = 1;
    }
    detail::ensure_progress(pairing.pairs, merge);
    pieces = detail::apply_merges(std::move(pieces), pairing, merge, std::move(merged_ne));
    ++iterations;
  }

  auto report = fit_on_partition(ds, detail::to_partition(pieces));
  report.iterations = iterations;
  report.wall_time = detail::seconds_since(t0);
  return report;
}

/// Reduces a coarse partition to 2k+1 pieces with the DP restricted to the
/// coarse cut points. A coarse partition with fewer pieces is refit as is and
/// flagged in the report's warnings.
inline FitReport postprocess(const DataSet& ds, const Partition& coarse, std::size_t k) {
  if (coarse.n() != ds.size()) throw StructuralError("coarse partition does not cover the dataset");
  if (k < 1) throw ParameterError("postprocess needs k >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t target = 2 * k + 1;
  FitReport report = [&] {
    if (coarse.piece_count() < target) {
      auto r = fit_on_partition(ds, coarse);
      r.warnings.push_back("coarse partition has " + std::to_string(coarse.piece_count()) + " pieces, fewer than 2k+1=" +
                           std::to_string(target) + "; returned unchanged");
      return r;
    }
    if (coarse.piece_count() == target) return fit_on_partition(ds, coarse);
    const auto cuts = coarse.interior();
    return fit_restricted_dp(ds, cuts, target);
  }();
  report.wall_time = detail::seconds_since(t0);
  return report;
}

/// BucketGreedyMerge followed by postprocessing down to 2k+1 pieces.
inline FitReport bucket_merge_postprocessed(const DataSet& ds, std::size_t k, double gamma) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto coarse = bucket_greedy_merge(ds, k, gamma);
  auto report = postprocess(ds, coarse.model.partition(), k);
  report.iterations = coarse.iterations;
  report.wall_time = detail::seconds_since(t0);
  return report;
}

}  // namespace segfit
