#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctrgan {

// Dense n-d array with row-major flat storage. Shapes are small (<= 4 dims
// in practice); matrix views are exposed through Eigen::Map so that GEMM and
// array expressions run on the flat buffer without copies.
template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using Flat = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap = Eigen::Map<
      const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.setZero(numel_of(shape_));
  }
  Tensor(std::vector<int> shape, Flat data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel_of(shape_))
      throw std::invalid_argument("Tensor: data size does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor constant(std::vector<int> shape, S v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(t.data_.size(), v);
    return t;
  }
  static Tensor scalar(S v) { return constant({1}, v); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int rank() const { return static_cast<int>(shape_.size()); }
  Eigen::Index numel() const { return data_.size(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  Flat& flat() { return data_; }
  const Flat& flat() const { return data_; }

  S& operator[](Eigen::Index i) { return data_[i]; }
  S operator[](Eigen::Index i) const { return data_[i]; }

  // (rows, cols) matrix view over the flat buffer; product of dims must match.
  MatrixMap mat(int rows, int cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap mat(int rows, int cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }
  // 2-d tensors view as themselves.
  MatrixMap mat() { return mat(shape_.at(0), shape_.at(1)); }
  ConstMatrixMap mat() const { return mat(shape_.at(0), shape_.at(1)); }

  Tensor reshaped(std::vector<int> shape) const {
    if (numel_of(shape) != data_.size())
      throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    return Tensor(std::move(shape), data_);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const { return data_.allFinite(); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    out.flat() = data_.template cast<T>();
    return out;
  }

  static Eigen::Index numel_of(const std::vector<int>& shape) {
    Eigen::Index n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

  static std::string shape_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

 private:
  void check_view(int rows, int cols) const {
    if (static_cast<Eigen::Index>(rows) * cols != data_.size())
      throw std::invalid_argument("Tensor::mat: view size mismatch");
  }

  std::vector<int> shape_;
  Flat data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace ctrgan
