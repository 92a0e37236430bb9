#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace smug {

/// Dense row-major double tensor, rank 1..4. The only array type used by the
/// numerical core; complex images are stored as two real channels.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(numel(shape_), 0.0);
  }
  Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    data_.assign(numel(shape_), fill);
  }

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data) {
    Tensor t;
    if (numel(shape) != data.size()) throw std::invalid_argument("Tensor: shape/data size mismatch");
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-d / 3-d / 4-d indexed access (row-major, no bounds checks in release hot paths)
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double& at(std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
    return data_[((n * shape_[1] + c) * shape_[2] + i) * shape_[3] + j];
  }
  double at(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const {
    return data_[((n * shape_[1] + c) * shape_[2] + i) * shape_[3] + j];
  }

  static std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = shape.empty() ? 0 : 1;
    for (auto d : shape) n *= d;
    return n;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// -- small BLAS-ish helpers over raw tensors ---------------------------------

inline void axpy(double a, const Tensor& x, Tensor& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i]));
  return m;
}

inline bool all_finite(const Tensor& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

inline void scale_inplace(Tensor& a, double c) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= c;
}

inline std::string shape_str(const Tensor& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.rank(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.dim(i));
  }
  return s + ")";
}

}  // namespace smug
