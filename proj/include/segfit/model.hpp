#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace segfit {

//---------------------------------------------------------------------------
// Errors
//---------------------------------------------------------------------------
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or sizes that do not line up (partition vs. dataset, vector lengths).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied parameter is out of its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A request would exceed a configured memory cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Sherman-Morrison denominator vanished.
class SingularUpdateError : public Error {
 public:
  using Error::Error;
};

//---------------------------------------------------------------------------
/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw StructuralError("matrix data size does not match rows*cols");
  }

  static Matrix identity(std::size_t dim) {
    Matrix m(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Half-open index range [begin, end) over the sorted rows of a dataset.
struct Interval {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool operator==(const Interval&) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

//---------------------------------------------------------------------------
/// Fixed-design data: feature rows x_i, responses y_i, sorted along one
/// designated feature column.
///
/// Pieces of a piecewise linear model are index intervals of this sorted
/// order. Every row must be finite and non-zero. The constructor also fixes
/// the ridge used by every least-squares solve on this dataset, so that the
/// incremental and the direct solvers agree.
class DataSet {
 public:
  /// Relative ridge applied to every Gram matrix, scaled by mean ||x_i||^2.
  static constexpr double kRelativeRidge = 1e-10;

  DataSet(Matrix x, std::vector<double> y, std::size_t partition_col = 0)
      : x_(std::move(x)), y_(std::move(y)), partition_col_(partition_col) {
    validate();
    double trace = 0.0;
    for (std::size_t i = 0; i < size(); ++i) trace += dot(row(i), row(i));
    ridge_ = kRelativeRidge * (trace / static_cast<double>(size()));
  }

  /// Sorts rows stably by `partition_col` and returns the dataset together with
  /// the permutation: sorted row r came from input row perm[r].
  static std::pair<DataSet, std::vector<std::size_t>> sorted(const Matrix& x,
                                                             const std::vector<double>& y,
                                                             std::size_t partition_col = 0) {
    if (x.rows() != y.size()) throw StructuralError("feature rows and responses differ in length");
    if (x.cols() > 0 && partition_col >= x.cols())
      throw ParameterError("partition column out of range");
    std::vector<std::size_t> perm(x.rows());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (x.cols() > 0) {
      std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
        return x(a, partition_col) < x(b, partition_col);
      });
    }
    Matrix xs(x.rows(), x.cols());
    std::vector<double> ys(y.size());
    for (std::size_t r = 0; r < perm.size(); ++r) {
      std::copy(x.row(perm[r]).begin(), x.row(perm[r]).end(), xs.row(r).begin());
      ys[r] = y[perm[r]];
    }
    return {DataSet(std::move(xs), std::move(ys), partition_col), std::move(perm)};
  }

  std::size_t size() const { return y_.size(); }
  std::size_t dim() const { return x_.cols(); }
  std::size_t partition_col() const { return partition_col_; }
  double ridge() const { return ridge_; }

  std::span<const double> row(std::size_t i) const { return x_.row(i); }
  const Matrix& features() const { return x_; }
  const std::vector<double>& y() const { return y_; }
  double y(std::size_t i) const { return y_[i]; }

  double partition_value(std::size_t i) const { return x_(i, partition_col_); }

 private:
  void validate() const {
    if (y_.empty()) throw StructuralError("dataset needs at least one row");
    if (x_.cols() == 0) throw StructuralError("dataset needs at least one feature column");
    if (x_.rows() != y_.size()) throw StructuralError("feature rows and responses differ in length");
    if (partition_col_ >= x_.cols()) throw ParameterError("partition column out of range");
    for (std::size_t i = 0; i < size(); ++i) {
      bool nonzero = false;
      for (double v : row(i)) {
        if (!std::isfinite(v)) throw StructuralError("non-finite feature in row " + std::to_string(i));
        nonzero = nonzero || v != 0.0;
      }
      if (!nonzero) throw StructuralError("all-zero feature row " + std::to_string(i));
      if (!std::isfinite(y_[i])) throw StructuralError("non-finite response in row " + std::to_string(i));
      if (i > 0 && partition_value(i) < partition_value(i - 1))
        throw StructuralError("rows are not sorted by the partition column");
    }
  }

  Matrix x_;
  std::vector<double> y_;
  std::size_t partition_col_ = 0;
  double ridge_ = 0.0;
};

//---------------------------------------------------------------------------
/// Ordered cover of [0, n) by contiguous non-empty intervals, stored as cut
/// points 0 = b_0 < b_1 < ... < b_m = n.
class Partition {
 public:
  explicit Partition(std::vector<std::size_t> bounds) : bounds_(std::move(bounds)) {
    if (bounds_.size() < 2) throw StructuralError("partition needs at least one interval");
    if (bounds_.front() != 0) throw StructuralError("partition must start at 0");
    for (std::size_t i = 1; i < bounds_.size(); ++i)
      if (bounds_[i] <= bounds_[i - 1]) throw StructuralError("partition bounds must strictly increase");
  }

  static Partition single(std::size_t n) { return Partition({0, n}); }

  static Partition singletons(std::size_t n) {
    std::vector<std::size_t> b(n + 1);
    std::iota(b.begin(), b.end(), std::size_t{0});
    return Partition(std::move(b));
  }

  /// Builds from consecutive intervals; throws unless they tile [0, n).
  static Partition from_intervals(std::span<const Interval> intervals) {
    std::vector<std::size_t> b{0};
    for (const auto& iv : intervals) {
      if (iv.begin != b.back()) throw StructuralError("intervals are not contiguous");
      b.push_back(iv.end);
    }
    return Partition(std::move(b));
  }

  std::size_t piece_count() const { return bounds_.size() - 1; }
  std::size_t n() const { return bounds_.back(); }
  Interval interval(std::size_t piece) const { return {bounds_[piece], bounds_[piece + 1]}; }
  const std::vector<std::size_t>& bounds() const { return bounds_; }

  /// Interior cut points b_1..b_{m-1}.
  std::vector<std::size_t> interior() const { return {bounds_.begin() + 1, bounds_.end() - 1}; }

  /// Piece containing row i.
  std::size_t piece_of(std::size_t i) const {
    auto it = std::upper_bound(bounds_.begin(), bounds_.end(), i);
    return static_cast<std::size_t>(it - bounds_.begin()) - 1;
  }

  bool operator==(const Partition&) const = default;

 private:
  std::vector<std::size_t> bounds_;
};

/// A partition plus one coefficient vector per piece.
class PiecewiseLinearModel {
 public:
  PiecewiseLinearModel(Partition partition, std::vector<std::vector<double>> thetas)
      : partition_(std::move(partition)), thetas_(std::move(thetas)) {
    if (thetas_.size() != partition_.piece_count())
      throw StructuralError("need exactly one coefficient vector per piece");
    for (const auto& t : thetas_)
      if (t.size() != thetas_.front().size()) throw StructuralError("coefficient vectors differ in length");
  }

  const Partition& partition() const { return partition_; }
  const std::vector<std::vector<double>>& thetas() const { return thetas_; }
  std::size_t piece_count() const { return partition_.piece_count(); }
  std::size_t dim() const { return thetas_.front().size(); }

  bool operator==(const PiecewiseLinearModel&) const = default;

 private:
  Partition partition_;
  std::vector<std::vector<double>> thetas_;
};

/// Estimator output.
struct FitReport {
  PiecewiseLinearModel model;
  double sse = 0.0;
  std::optional<double> mse_vs_truth;
  double wall_time = 0.0;
  std::size_t iterations = 0;
  std::vector<std::string> warnings;
};

//---------------------------------------------------------------------------
inline std::vector<double> predict(const PiecewiseLinearModel& model, const DataSet& ds) {
  if (model.partition().n() != ds.size())
    throw StructuralError("model partition covers " + std::to_string(model.partition().n()) +
                          " rows, dataset has " + std::to_string(ds.size()));
  if (model.dim() != ds.dim()) throw StructuralError("model and dataset dimensions differ");
  std::vector<double> out(ds.size());
  for (std::size_t p = 0; p < model.piece_count(); ++p) {
    const auto iv = model.partition().interval(p);
    const auto& theta = model.thetas()[p];
    for (std::size_t i = iv.begin; i < iv.end; ++i) out[i] = dot(theta, ds.row(i));
  }
  return out;
}

/// Sum of squared differences, left to right.
inline double sum_squared_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("vector lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i] - b[i];
    s += r * r;
  }
  return s;
}

inline double mse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw StructuralError("vector lengths differ");
  if (predicted.empty()) throw StructuralError("mse of empty vectors");
  return sum_squared_diff(truth, predicted) / static_cast<double>(truth.size());
}

inline double sse_against_responses(const PiecewiseLinearModel& model, const DataSet& ds) {
  const auto p = predict(model, ds);
  return sum_squared_diff(ds.y(), p);
}

}  // namespace segfit
