#pragma once

#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "segfit/model.hpp"

namespace segfit {

//---------------------------------------------------------------------------
// Dense kernels
//---------------------------------------------------------------------------

/// Accumulated normal equations X^T X, X^T y, y^T y over a set of rows.
struct NormalEquations {
  Matrix gram;
  std::vector<double> xty;
  double yty = 0.0;
  std::size_t count = 0;

  NormalEquations() = default;
  explicit NormalEquations(std::size_t dim) : gram(dim, dim), xty(dim, 0.0) {}

  std::size_t dim() const { return xty.size(); }

  void add_row(std::span<const double> x, double y) {
    const std::size_t d = dim();
    double* g = gram.data().data();
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x[i];
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += xi * x[j];
      xty[i] += xi * y;
    }
    yty += y * y;
    ++count;
  }

  NormalEquations& operator+=(const NormalEquations& other) {
    auto g = gram.data();
    auto o = other.gram.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o[i];
    for (std::size_t i = 0; i < xty.size(); ++i) xty[i] += other.xty[i];
    yty += other.yty;
    count += other.count;
    return *this;
  }

  static NormalEquations over(const DataSet& ds, Interval iv) {
    NormalEquations ne(ds.dim());
    for (std::size_t i = iv.begin; i < iv.end; ++i) ne.add_row(ds.row(i), ds.y(i));
    return ne;
  }
};

/// In-place Cholesky factorization; the lower triangle receives L with A = L L^T.
inline void cholesky_in_place(Matrix& a) {
  const std::size_t n = a.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double s = a(j, j);
    for (std::size_t k = 0; k < j; ++k) s -= a(j, k) * a(j, k);
    if (!(s > 0.0)) throw Error("Gram matrix is not positive definite");
    const double ljj = std::sqrt(s);
    a(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double t = a(i, j);
      for (std::size_t k = 0; k < j; ++k) t -= a(i, k) * a(j, k);
      a(i, j) = t / ljj;
    }
  }
}

/// Solves (L L^T) z = b in place, L from cholesky_in_place.
inline void cholesky_solve(const Matrix& l, std::span<double> b) {
  const std::size_t n = l.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double t = b[i];
    for (std::size_t k = 0; k < i; ++k) t -= l(i, k) * b[k];
    b[i] = t / l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double t = b[i];
    for (std::size_t k = i + 1; k < n; ++k) t -= l(k, i) * b[k];
    b[i] = t / l(i, i);
  }
}

/// (gram + ridge I)^{-1}, exactly symmetric.
inline Matrix ridge_inverse(const Matrix& gram, double ridge) {
  const std::size_t d = gram.rows();
  Matrix l = gram;
  for (std::size_t i = 0; i < d; ++i) l(i, i) += ridge;
  cholesky_in_place(l);
  Matrix inv(d, d);
  std::vector<double> col(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::fill(col.begin(), col.end(), 0.0);
    col[j] = 1.0;
    cholesky_solve(l, col);
    for (std::size_t i = 0; i < d; ++i) inv(i, j) = col[i];
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double m = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = m;
      inv(j, i) = m;
    }
  return inv;
}

/// Least-squares coefficients from the normal equations. Solves the ridge
/// system, then takes kRefineSteps of iterated Tikhonov refinement
/// theta += (G + ridge I)^{-1} (X^T y - G theta), which strips the ridge bias
/// from every well-determined direction and leaves null directions at zero.
inline constexpr int kRefineSteps = 2;

inline std::vector<double> solve_ridge(const NormalEquations& ne, double ridge) {
  const std::size_t d = ne.dim();
  Matrix l = ne.gram;
  for (std::size_t i = 0; i < d; ++i) l(i, i) += ridge;
  cholesky_in_place(l);
  std::vector<double> theta = ne.xty;
  cholesky_solve(l, theta);
  std::vector<double> r(d);
  for (int step = 0; step < kRefineSteps; ++step) {
    for (std::size_t i = 0; i < d; ++i) r[i] = ne.xty[i] - dot(ne.gram.row(i), theta);
    cholesky_solve(l, r);
    for (std::size_t i = 0; i < d; ++i) theta[i] += r[i];
  }
  return theta;
}

inline double residual_sse(const DataSet& ds, Interval iv, std::span<const double> theta) {
  double s = 0.0;
  for (std::size_t i = iv.begin; i < iv.end; ++i) {
    const double r = ds.y(i) - dot(theta, ds.row(i));
    s += r * r;
  }
  return s;
}

struct LeastSquaresFit {
  std::vector<double> theta;
  double sse = 0.0;
};

/// Ridge-stabilised least-squares fit on one interval. The ridge is the
/// dataset's, so this agrees with the incremental sweep.
inline LeastSquaresFit least_squares(const DataSet& ds, Interval iv) {
  if (iv.empty() || iv.end > ds.size()) throw StructuralError("least_squares needs a non-empty interval inside the data");
  auto ne = NormalEquations::over(ds, iv);
  LeastSquaresFit fit;
  fit.theta = solve_ridge(ne, ds.ridge());
  fit.sse = residual_sse(ds, iv, fit.theta);
  return fit;
}

//---------------------------------------------------------------------------
// Incremental Gram inverse
//---------------------------------------------------------------------------

/// Running (X^T X + ridge I)^{-1}, X^T y and y^T y for a growing interval.
struct GramState {
  Matrix gram_inv;
  std::vector<double> xty;
  double yty = 0.0;
  std::size_t count = 0;
  double ridge = 0.0;

  /// Empty interval: gram_inv = (ridge I)^{-1}. Requires ridge > 0.
  static GramState seeded(std::size_t dim, double ridge) {
    if (!(ridge > 0.0)) throw ParameterError("GramState seeding needs a positive ridge");
    GramState s;
    s.gram_inv = Matrix(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) s.gram_inv(i, i) = 1.0 / ridge;
    s.xty.assign(dim, 0.0);
    s.ridge = ridge;
    return s;
  }

  /// Interval summarised by its normal equations, inverted directly.
  static GramState from_normal_equations(const NormalEquations& ne, double ridge) {
    if (!(ridge > 0.0)) throw ParameterError("GramState seeding needs a positive ridge");
    return {ridge_inverse(ne.gram, ridge), ne.xty, ne.yty, ne.count, ridge};
  }

  std::size_t dim() const { return xty.size(); }
};

namespace detail {

inline constexpr double kSingularDenominator = 1e-12;

/// Sherman-Morrison rank-one update in place. `v` is d-length scratch.
/// Returns the denominator 1 + x^T M^{-1} x.
inline double absorb_in_place(GramState& s, std::span<const double> x, double y, std::span<double> v) {
  const std::size_t d = s.dim();
  double* g = s.gram_inv.data().data();
  double denom = 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    double t = 0.0;
    const double* gi = g + i * d;
    for (std::size_t j = 0; j < d; ++j) t += gi[j] * x[j];
    v[i] = t;
    denom += x[i] * t;
  }
  if (!(std::abs(denom) > kSingularDenominator))
    throw SingularUpdateError("Sherman-Morrison denominator is numerically zero");
  const double inv = 1.0 / denom;
  for (std::size_t i = 0; i < d; ++i) {
    double* gi = g + i * d;
    const double vi = v[i];
    for (std::size_t j = 0; j < d; ++j) gi[j] -= (vi * v[j]) * inv;
  }
  for (std::size_t i = 0; i < d; ++i) s.xty[i] += x[i] * y;
  s.yty += y * y;
  ++s.count;
  return denom;
}

}  // namespace detail

/// Absorbs one point: gram_inv <- (G + x x^T)^{-1} via Sherman-Morrison, O(d^2).
inline GramState gram_absorb(GramState state, std::span<const double> x, double y) {
  if (x.size() != state.dim()) throw StructuralError("point dimension differs from state");
  std::vector<double> v(state.dim());
  detail::absorb_in_place(state, x, y, v);
  return state;
}

/// SSE of the current interval's ridge fit: y^T y - b^T G^{-1} b, clamped at 0.
inline double gram_error(const GramState& s) {
  const std::size_t d = s.dim();
  const double* g = s.gram_inv.data().data();
  double q = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double t = 0.0;
    const double* gi = g + i * d;
    for (std::size_t j = 0; j < d; ++j) t += gi[j] * s.xty[j];
    q += s.xty[i] * t;
  }
  const double sse = s.yty - q;
  return sse > 0.0 ? sse : 0.0;
}

/// Sweeps b = start+1, start+2, ... and yields err(start, b).
///
/// While the interval holds at most 2 * dim points the inverse is recomputed
/// from the running Gram and the error is summed from residuals: the Gram is
/// singular or nearly so there, and y^T y - b^T G^{-1} b would cancel away
/// every significant digit. Beyond that every point is a Sherman-Morrison
/// update. An update whose denominator exceeds kReseedDenominator means the
/// new row points into a direction the Gram matrix has barely seen, and the
/// inverse is recomputed from the running Gram.
class ErrorSweep {
 public:
  static constexpr double kReseedDenominator = 1e6;
  static constexpr std::size_t kDirectSpanPerDim = 2;

  ErrorSweep(const DataSet& ds, std::size_t start)
      : ds_(&ds), start_(start), gram_(ds.dim(), ds.dim()), scratch_(ds.dim()) {
    state_.gram_inv = Matrix(ds.dim(), ds.dim());
    state_.xty.assign(ds.dim(), 0.0);
    state_.ridge = ds.ridge();
  }

  std::size_t start() const { return start_; }
  std::size_t end() const { return start_ + state_.count; }
  bool done() const { return end() >= ds_->size(); }
  const GramState& state() const { return state_; }
  std::size_t reseeds() const { return reseeds_; }

  /// Absorbs row end() and returns the error of [start, end()).
  double advance() {
    const std::size_t d = ds_->dim();
    const auto x = ds_->row(end());
    const double y = ds_->y(end());
    double* g = gram_.data().data();
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += x[i] * x[j];

    if (state_.count < kDirectSpanPerDim * d) {
      for (std::size_t i = 0; i < d; ++i) state_.xty[i] += x[i] * y;
      state_.yty += y * y;
      ++state_.count;
      state_.gram_inv = ridge_inverse(gram_, state_.ridge);
      return direct_error();
    }
    double denom;
    try {
      denom = detail::absorb_in_place(state_, x, y, scratch_);
    } catch (const SingularUpdateError&) {
      for (std::size_t i = 0; i < d; ++i) state_.xty[i] += x[i] * y;
      state_.yty += y * y;
      ++state_.count;
      denom = kReseedDenominator * 2;
    }
    if (denom > kReseedDenominator) {
      state_.gram_inv = ridge_inverse(gram_, state_.ridge);
      ++reseeds_;
    }
    return gram_error(state_);
  }

 private:
  double direct_error() {
    const std::size_t d = ds_->dim();
    for (std::size_t i = 0; i < d; ++i) scratch_[i] = dot(state_.gram_inv.row(i), state_.xty);
    return residual_sse(*ds_, {start_, end()}, scratch_);
  }

  const DataSet* ds_;
  std::size_t start_;
  GramState state_;
  Matrix gram_;
  std::vector<double> scratch_;
  std::size_t reseeds_ = 0;
};

//---------------------------------------------------------------------------
// Interval error table
//---------------------------------------------------------------------------

/// err(a, b) for all 0 <= a < b <= n, one row per start a.
class IntervalErrorTable {
 public:
  explicit IntervalErrorTable(std::size_t n) : n_(n), errs_(n * (n + 1) / 2, 0.0) {}

  std::size_t n() const { return n_; }
  double operator()(std::size_t a, std::size_t b) const { return errs_[offset(a) + (b - a - 1)]; }

  /// Entries for b = a+1 .. n.
  std::span<const double> row(std::size_t a) const { return {errs_.data() + offset(a), n_ - a}; }
  std::span<double> row(std::size_t a) { return {errs_.data() + offset(a), n_ - a}; }

 private:
  std::size_t offset(std::size_t a) const { return a * n_ - a * (a - 1) / 2; }

  std::size_t n_;
  std::vector<double> errs_;
};

inline constexpr std::size_t kDefaultTableCap = 20000;

inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

struct TableOptions {
  std::size_t cap = kDefaultTableCap;
  unsigned threads = 1;  // 0 = all cores
};

/// Runs `body(a)` for a in [0, count) over up to `threads` workers, interleaved.
template <class Body>
void parallel_for_starts(std::size_t count, unsigned threads, Body&& body) {
  threads = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t a = 0; a < count; ++a) body(a);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t a = w; a < count; a += threads) body(a);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// O(n^2 d^2) time, O(n^2) memory.
inline IntervalErrorTable build_error_table(const DataSet& ds, TableOptions options = {}) {
  const std::size_t n = ds.size();
  if (n > options.cap)
    throw CapacityError("error table for n=" + std::to_string(n) + " exceeds the cap of " +
                        std::to_string(options.cap) + " rows; use the streaming DP mode");
  IntervalErrorTable table(n);
  parallel_for_starts(n, options.threads, [&](std::size_t a) {
    ErrorSweep sweep(ds, a);
    auto row = table.row(a);
    for (std::size_t b = a + 1; b <= n; ++b) row[b - a - 1] = sweep.advance();
  });
  return table;
}

}  // namespace segfit
