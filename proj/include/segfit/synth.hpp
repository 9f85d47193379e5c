#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segfit/model.hpp"

namespace segfit {

/// SplitMix64: a Weyl counter pushed through a fixed 64-bit mixer. The
/// integer stream is identical on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [lo, hi], unbiased by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % range);
  }

  /// Standard normal, Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = uniform(-1.0, 1.0);
      v = uniform(-1.0, 1.0);
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum class ScenarioKind { kPiecewiseConstant, kPiecewiseLinear, kPiecewisePolynomial, kMisspecified };

inline std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kPiecewiseConstant: return "constant";
    case ScenarioKind::kPiecewiseLinear: return "linear";
    case ScenarioKind::kPiecewisePolynomial: return "poly";
    case ScenarioKind::kMisspecified: return "misspecified";
  }
  return "unknown";
}

inline std::optional<ScenarioKind> parse_scenario_kind(std::string_view name) {
  for (auto kind : {ScenarioKind::kPiecewiseConstant, ScenarioKind::kPiecewiseLinear,
                    ScenarioKind::kPiecewisePolynomial, ScenarioKind::kMisspecified})
    if (to_string(kind) == name) return kind;
  return std::nullopt;
}

/// Synthetic experiment description. For the polynomial kind `d` is the degree.
struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kPiecewiseConstant;
  std::size_t k = 10;
  std::size_t n = 1000;
  std::size_t d = 1;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
  double misspec_budget = 0.0;  // target mean-square misspecification (OPT_k)

  void validate() const {
    if (k < 1 || n < k) throw ParameterError("scenario needs n >= k >= 1");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ParameterError("scenario needs finite sigma >= 0");
    if ((kind == ScenarioKind::kPiecewiseLinear || kind == ScenarioKind::kMisspecified) && d < 1)
      throw ParameterError("linear scenarios need d >= 1");
    if (!(misspec_budget >= 0.0) || !std::isfinite(misspec_budget))
      throw ParameterError("misspecification budget must be finite and >= 0");
  }

  /// Number of feature columns in generated data.
  std::size_t feature_dim() const {
    switch (kind) {
      case ScenarioKind::kPiecewiseConstant: return 1;
      case ScenarioKind::kPiecewisePolynomial: return d + 1;
      default: return d;
    }
  }
};

struct SyntheticInstance {
  DataSet dataset;
  std::vector<double> truth_values;  // f(x_i), including any misspecification
  PiecewiseLinearModel truth_model;
  double opt_k = 0.0;
};

/// Equal-length segments of floor(n/k); the remainder goes to the last one.
inline std::vector<std::size_t> equal_segment_bounds(std::size_t n, std::size_t k) {
  std::vector<std::size_t> b(k + 1);
  const std::size_t len = n / k;
  for (std::size_t l = 0; l < k; ++l) b[l] = l * len;
  b[k] = n;
  return b;
}

/// Rows (1, x, x^2, ..., x^degree).
inline Matrix vandermonde_embed(std::span<const double> x, std::size_t degree) {
  Matrix m(x.size(), degree + 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double p = 1.0;
    for (std::size_t j = 0; j <= degree; ++j) {
      m(i, j) = p;
      p *= x[i];
    }
  }
  return m;
}

/// Misspecification offset: a slow sinusoid over the index, unit mean square
/// before scaling.
inline std::vector<double> misspecification_shape(std::size_t n) {
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i)
    z[i] = std::sin(2.0 * std::numbers::pi * 3.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
  return z;
}

/// Draw order: segment parameters, then features, then noise.
inline SyntheticInstance generate(const ScenarioSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  const std::size_t n = spec.n;
  const std::size_t dim = spec.feature_dim();
  Partition truth_partition(equal_segment_bounds(n, spec.k));

  std::vector<std::vector<double>> thetas(spec.k, std::vector<double>(dim));
  for (auto& theta : thetas) {
    if (spec.kind == ScenarioKind::kPiecewiseConstant) {
      theta[0] = static_cast<double>(rng.uniform_int(1, 10));
    } else {
      for (double& t : theta) t = rng.uniform(-1.0, 1.0);
    }
  }

  Matrix x;
  std::size_t partition_col = 0;
  switch (spec.kind) {
    case ScenarioKind::kPiecewiseConstant:
      x = Matrix(n, 1, 1.0);
      break;
    case ScenarioKind::kPiecewisePolynomial: {
      std::vector<double> s(n);
      for (double& v : s) v = rng.uniform(-1.0, 1.0);
      std::sort(s.begin(), s.end());
      x = vandermonde_embed(s, spec.d);
      partition_col = spec.d >= 1 ? 1 : 0;
      break;
    }
    case ScenarioKind::kPiecewiseLinear:
    case ScenarioKind::kMisspecified: {
      Matrix raw(n, dim);
      for (double& v : raw.data()) v = rng.normal();
      // Rows are i.i.d., so ordering them by the first feature leaves their
      // joint law unchanged and makes the pieces intervals of that feature.
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return raw(a, 0) < raw(b, 0); });
      x = Matrix(n, dim);
      for (std::size_t r = 0; r < n; ++r) std::copy(raw.row(order[r]).begin(), raw.row(order[r]).end(), x.row(r).begin());
      break;
    }
  }

  std::vector<double> truth(n);
  for (std::size_t p = 0; p < spec.k; ++p) {
    const auto iv = truth_partition.interval(p);
    for (std::size_t i = iv.begin; i < iv.end; ++i) truth[i] = dot(thetas[p], x.row(i));
  }

  double opt_k = 0.0;
  if (spec.kind == ScenarioKind::kMisspecified && spec.misspec_budget > 0.0) {
    auto z = misspecification_shape(n);
    double ms = 0.0;
    for (double v : z) ms += v * v;
    ms /= static_cast<double>(n);
    const double scale = std::sqrt(spec.misspec_budget / ms);
    double realized = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double off = scale * z[i];
      truth[i] += off;
      realized += off * off;
    }
    opt_k = realized / static_cast<double>(n);
  }

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = truth[i] + spec.noise_sigma * rng.normal();
  if (spec.noise_sigma == 0.0) y = truth;

  return SyntheticInstance{DataSet(std::move(x), std::move(y), partition_col), std::move(truth),
                           PiecewiseLinearModel(std::move(truth_partition), std::move(thetas)), opt_k};
}

/// A univariate index-like series: continuous piecewise-linear trend over
/// `pieces` segments of random length, plus AR(1) noise. Stands in for a
/// price index when no real data is at hand.
struct TrendSeries {
  std::vector<double> y;
  std::vector<double> trend;
};

inline TrendSeries generate_trend_series(std::size_t n, std::size_t pieces, double sigma, std::uint64_t seed) {
  if (pieces < 1 || n < pieces) throw ParameterError("trend series needs n >= pieces >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParameterError("trend series needs finite sigma >= 0");
  SplitMix64 rng(seed);
  std::vector<double> weights(pieces);
  double total = 0.0;
  for (double& w : weights) total += (w = rng.uniform(0.5, 1.5));
  std::vector<std::size_t> knots{0};
  double acc = 0.0;
  for (std::size_t p = 0; p + 1 < pieces; ++p) {
    acc += weights[p];
    knots.push_back(std::max(knots.back() + 1, static_cast<std::size_t>(acc / total * static_cast<double>(n))));
  }
  knots.push_back(n);

  TrendSeries out;
  out.trend.resize(n);
  out.y.resize(n);
  double level = 1000.0;
  for (std::size_t p = 0; p < pieces; ++p) {
    const double slope = rng.uniform(-2.0, 2.0);
    for (std::size_t i = knots[p]; i < std::min(knots[p + 1], n); ++i) {
      out.trend[i] = level;
      level += slope;
    }
  }
  double noise = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    noise = 0.9 * noise + sigma * rng.normal();
    out.y[i] = out.trend[i] + noise;
  }
  return out;
}

}  // namespace segfit
