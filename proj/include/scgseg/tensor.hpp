// Dense tensor of rank 1..4 backed by a flat Eigen array. Layout is row-major
// with the last dimension fastest, so a (B, C, H, W) feature map stores W
// contiguously and a (B, n, c) node batch stores c contiguously. Matrix views
// onto slices are exposed as Eigen::Map so the heavy lifting stays inside
// Eigen expressions.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "scgseg/errors.hpp"

namespace scgseg {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

template <typename Scalar>
struct Tensor {
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixRM =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapRM = Eigen::Map<MatrixRM>;
  using ConstMapRM = Eigen::Map<const MatrixRM>;
  using MapVec = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  Shape shape;
  Storage data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)) {
    data = Storage::Zero(shape_size(shape));
  }
  Tensor(Shape s, Scalar fill) : shape(std::move(s)) {
    data = Storage::Constant(shape_size(shape), fill);
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, Scalar v) { return Tensor(std::move(s), v); }
  static Tensor scalar(Scalar v) { return Tensor({1}, v); }

  static Tensor from(Shape s, std::initializer_list<Scalar> vals) {
    Tensor t(std::move(s));
    if (static_cast<std::int64_t>(vals.size()) != t.size())
      throw ShapeError("initializer size does not match shape " +
                       shape_str(t.shape));
    std::int64_t i = 0;
    for (Scalar v : vals) t.data[i++] = v;
    return t;
  }

  std::int64_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  Scalar& operator[](std::int64_t i) { return data[i]; }
  Scalar operator[](std::int64_t i) const { return data[i]; }

  Scalar& at(int i) { return data[i]; }
  Scalar& at(int i, int j) { return data[static_cast<std::int64_t>(i) * dim(1) + j]; }
  Scalar& at(int i, int j, int k) {
    return data[(static_cast<std::int64_t>(i) * dim(1) + j) * dim(2) + k];
  }
  Scalar& at(int i, int j, int k, int l) {
    return data[((static_cast<std::int64_t>(i) * dim(1) + j) * dim(2) + k) *
                    dim(3) +
                l];
  }
  Scalar at(int i) const { return data[i]; }
  Scalar at(int i, int j) const {
    return data[static_cast<std::int64_t>(i) * dim(1) + j];
  }
  Scalar at(int i, int j, int k) const {
    return data[(static_cast<std::int64_t>(i) * dim(1) + j) * dim(2) + k];
  }
  Scalar at(int i, int j, int k, int l) const {
    return data[((static_cast<std::int64_t>(i) * dim(1) + j) * dim(2) + k) *
                    dim(3) +
                l];
  }

  // View of the whole tensor as a rows x cols row-major matrix.
  MapRM matrix(int rows, int cols) {
    if (static_cast<std::int64_t>(rows) * cols != size())
      throw ShapeError("matrix view " + std::to_string(rows) + "x" +
                       std::to_string(cols) + " does not cover tensor " +
                       shape_str(shape));
    return MapRM(data.data(), rows, cols);
  }
  ConstMapRM matrix(int rows, int cols) const {
    if (static_cast<std::int64_t>(rows) * cols != size())
      throw ShapeError("matrix view " + std::to_string(rows) + "x" +
                       std::to_string(cols) + " does not cover tensor " +
                       shape_str(shape));
    return ConstMapRM(data.data(), rows, cols);
  }

  // View of batch slice b (first dimension) as a rows x cols matrix.
  MapRM slice_matrix(int b, int rows, int cols) {
    const std::int64_t per = size() / dim(0);
    if (static_cast<std::int64_t>(rows) * cols != per)
      throw ShapeError("slice view does not cover batch element of " +
                       shape_str(shape));
    return MapRM(data.data() + per * b, rows, cols);
  }
  ConstMapRM slice_matrix(int b, int rows, int cols) const {
    const std::int64_t per = size() / dim(0);
    if (static_cast<std::int64_t>(rows) * cols != per)
      throw ShapeError("slice view does not cover batch element of " +
                       shape_str(shape));
    return ConstMapRM(data.data() + per * b, rows, cols);
  }

  Tensor reshaped(Shape s) const {
    if (shape_size(s) != size())
      throw ShapeError("reshape " + shape_str(shape) + " -> " + shape_str(s) +
                       " changes element count");
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    return t;
  }
};

template <typename Scalar>
void require_shape(const Tensor<Scalar>& t, const Shape& s,
                   const std::string& what) {
  if (t.shape != s)
    throw ShapeError(what + ": expected shape " + shape_str(s) + ", got " +
                     shape_str(t.shape));
}

template <typename Scalar>
void require_rank(const Tensor<Scalar>& t, int r, const std::string& what) {
  if (t.rank() != r)
    throw ShapeError(what + ": expected rank " + std::to_string(r) +
                     " tensor, got shape " + shape_str(t.shape));
}

}  // namespace scgseg
