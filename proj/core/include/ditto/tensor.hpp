#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ditto {

// Dense row-major 2-D matrix of doubles.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.rows(), t.cols()); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  bool all_finite() const noexcept;
  bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

  // Bitwise equality of shape and contents.
  bool operator==(const Tensor& o) const noexcept;

  Tensor transpose() const;
  // Rows selected by index, in the given order.
  Tensor gather_rows(std::span<const std::size_t> idx) const;
  // Vertical concatenation; column counts must agree.
  static Tensor vstack(const Tensor& top, const Tensor& bottom);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain (untaped) kernels shared by the tape ops and the analysis code.
Tensor matmul_raw(const Tensor& a, const Tensor& b);
// aᵀ·b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a·bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
double frobenius_sq(const Tensor& t);

}  // namespace ditto
