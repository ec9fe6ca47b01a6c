#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "adgan/common.hpp"

namespace adgan {

// Dense row-major matrix of doubles. The only tensor type in the project;
// row vectors (1 x n), column vectors (m x 1) and scalars (1 x 1) are all
// matrices.
class Matrix {
 public:
  Matrix() = default;

  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(checked_size(rows, cols), 0.0) {}

  Matrix(int rows, int cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != checked_size(rows, cols))
      throw ValidationError("matrix data length does not match shape");
  }

  static Matrix filled(int rows, int cols, double v) {
    Matrix m(rows, cols);
    for (auto& x : m.data_) x = v;
    return m;
  }

  static Matrix scalar(double v) { return Matrix(1, 1, {v}); }

  static Matrix row_vector(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Matrix(1, n, std::move(v));
  }

  static Matrix column_vector(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Matrix(n, 1, std::move(v));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const double* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void ensure_finite(const char* where) const {
    if (!all_finite())
      throw NumericError(std::string("non-finite value produced in ") + where);
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  static std::size_t checked_size(int rows, int cols) {
    if (rows < 0 || cols < 0) throw ValidationError("negative matrix dimension");
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// out = op(a) * op(b) where op transposes when the flag is set.
// Kernels are loop-ordered for contiguous access; these run in the training
// hot path.
inline void matmul_into(Matrix& out, const Matrix& a, const Matrix& b, bool ta, bool tb) {
  const int m = ta ? a.cols() : a.rows();
  const int k = ta ? a.rows() : a.cols();
  const int kb = tb ? b.cols() : b.rows();
  const int n = tb ? b.rows() : b.cols();
  if (k != kb) throw ValidationError("matmul: inner dimensions disagree");
  out = Matrix(m, n);
  double* o = out.data();
  if (!ta && !tb) {
    for (int i = 0; i < m; ++i) {
      const double* ar = a.row(i);
      double* orow = o + static_cast<std::size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double av = ar[p];
        if (av == 0.0) continue;
        const double* br = b.row(p);
        for (int j = 0; j < n; ++j) orow[j] += av * br[j];
      }
    }
  } else if (!ta && tb) {
    for (int i = 0; i < m; ++i) {
      const double* ar = a.row(i);
      double* orow = o + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* br = b.row(j);
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
        orow[j] = acc;
      }
    }
  } else if (ta && !tb) {
    for (int p = 0; p < k; ++p) {
      const double* ar = a.row(p);
      const double* br = b.row(p);
      for (int i = 0; i < m; ++i) {
        const double av = ar[i];
        if (av == 0.0) continue;
        double* orow = o + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] += av * br[j];
      }
    }
  } else {
    for (int p = 0; p < k; ++p) {
      const double* ar = a.row(p);
      for (int i = 0; i < m; ++i) {
        const double av = ar[i];
        if (av == 0.0) continue;
        double* orow = o + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] += av * b.at(j, p);
      }
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b, bool ta = false, bool tb = false) {
  Matrix out;
  matmul_into(out, a, b, ta, tb);
  return out;
}

}  // namespace adgan
