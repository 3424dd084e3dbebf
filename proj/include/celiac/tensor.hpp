#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace celiac {

// Dense row-major tensor of 64-bit floats. Training and all verification run
// in double precision; the shape is fixed at construction.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor from(std::initializer_list<double> values);  // 1-D

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // 4-d accessor for [N,C,H,W] layouts
  double& at4(int n, int c, int h, int w) {
    return data_[static_cast<std::size_t>(
        ((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double at4(int n, int c, int h, int w) const {
    return data_[static_cast<std::size_t>(
        ((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double& at2(int r, int c) {
    return data_[static_cast<std::size_t>(static_cast<std::int64_t>(r) * shape_[1] + c)];
  }
  double at2(int r, int c) const {
    return data_[static_cast<std::size_t>(static_cast<std::int64_t>(r) * shape_[1] + c)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  void fill(double v);
  bool all_finite() const;

  std::string shape_string() const;  // e.g. "[2,3,64,64]"

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::int64_t shape_product(const std::vector<int>& shape);

// Row-wise stabilized softmax of a [N,C] tensor.
Tensor softmax_rows(const Tensor& logits);

}  // namespace celiac
