#include "ditto/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ditto/errors.hpp"

namespace ditto {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                     shape_str());
  }
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged initializer for tensor");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

bool Tensor::operator==(const Tensor& o) const noexcept {
  if (!same_shape(o)) return false;
  return data_.empty() ||
         std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0;
}

Tensor Tensor::transpose() const {
  Tensor t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Tensor Tensor::gather_rows(std::span<const std::size_t> idx) const {
  Tensor out(idx.size(), cols_);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows_) throw ShapeError("row index out of range for " + shape_str());
    std::copy_n(data_.data() + idx[i] * cols_, cols_, out.data_.data() + i * cols_);
  }
  return out;
}

Tensor Tensor::vstack(const Tensor& top, const Tensor& bottom) {
  if (top.cols_ != bottom.cols_) {
    throw ShapeError("vstack column mismatch: " + top.shape_str() + " vs " + bottom.shape_str());
  }
  Tensor out(top.rows_ + bottom.rows_, top.cols_);
  std::copy(top.data_.begin(), top.data_.end(), out.data_.begin());
  std::copy(bottom.data_.begin(), bottom.data_.end(),
            out.data_.begin() + static_cast<std::ptrdiff_t>(top.data_.size()));
  return out;
}

Tensor matmul_raw(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_str() + " x " + b.shape_str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* brow = &b.data()[p * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn shape mismatch: " + a.shape_str() + "^T x " + b.shape_str());
  }
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Tensor out(m, n);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = &a.data()[p * m];
    const double* brow = &b.data()[p * n];
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      double* orow = &out(i, 0);
      for (std::size_t j = 0; j < n; ++j) orow[j] += api * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt shape mismatch: " + a.shape_str() + " x " + b.shape_str() + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = &a.data()[i * k];
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = &b.data()[j * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out(i, j) = acc;
    }
  }
  return out;
}

double frobenius_sq(const Tensor& t) {
  double s = 0.0;
  for (double x : t.data()) s += x * x;
  return s;
}

}  // namespace ditto
