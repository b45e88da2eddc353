#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msclstm/errors.hpp"

namespace msclstm {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  if (s.size() == 1) out += ",";
  return out + ")";
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array. The shape is fixed at construction; elements may be
/// written through data() by the single owner (layers filling outputs, the
/// optimizer updating weights).
///
/// Training runs on Tensor<float>. Tensor<double> exists so finite-difference
/// gradient checks can run the same layer code at high precision.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  /// Empty placeholder: rank 0, no elements.
  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real{0}) : shape_(std::move(shape)) {
    check_dims();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor vector(std::initializer_list<Real> values) {
    return Tensor({values.size()}, std::vector<Real>(values));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<Real> flat;
    flat.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(flat));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const Real> data() const noexcept { return data_; }
  std::span<Real> data() noexcept { return data_; }
  Real* raw() noexcept { return data_.data(); }
  const Real* raw() const noexcept { return data_.data(); }

  Real& operator[](std::size_t flat) { return data_[flat]; }
  Real operator[](std::size_t flat) const { return data_[flat]; }

  Real& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  Real at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  Real& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  Real at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Row i of a rank-2 tensor.
  std::span<const Real> row(std::size_t i) const {
    return std::span<const Real>(data_).subspan(i * shape_[1], shape_[1]);
  }
  std::span<Real> row(std::size_t i) {
    return std::span<Real>(data_).subspan(i * shape_[1], shape_[1]);
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same elements under a new shape with equal element count.
  Tensor reshape(Shape new_shape) const {
    if (shape_size(new_shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                           shape_string(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
  }

  bool all_finite() const {
    for (Real v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  void check_dims() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw DimensionError("zero-length dimension in shape " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<Real> data_;
};

/// Bitwise equality of shapes and element representations.
template <typename Real>
bool bitwise_equal(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.raw(), b.raw(), a.size() * sizeof(Real)) == 0;
}

enum class ElementOp { add, sub, mul, scale };

namespace detail {

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

template <typename Real, typename F>
Tensor<Real> zip(const Tensor<Real>& a, const Tensor<Real>& b, const char* what, F f) {
  require_same_shape(a, b, what);
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace detail

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::zip(a, b, "add", [](Real x, Real y) { return x + y; });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::zip(a, b, "sub", [](Real x, Real y) { return x - y; });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::zip(a, b, "mul", [](Real x, Real y) { return x * y; });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real s) {
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

/// Dispatch form; `scale` takes its factor from b when b is a one-element tensor.
template <typename Real>
Tensor<Real> elementwise(ElementOp op, const Tensor<Real>& a, const Tensor<Real>& b) {
  switch (op) {
    case ElementOp::add: return add(a, b);
    case ElementOp::sub: return sub(a, b);
    case ElementOp::mul: return mul(a, b);
    case ElementOp::scale:
      if (b.size() != 1) {
        throw DimensionError("scale expects a scalar operand, got " + shape_string(b.shape()));
      }
      return scale(a, b[0]);
  }
  throw UsageError("unknown elementwise op");
}

/// In-place a += b.
template <typename Real>
void add_into(Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "add_into");
  Real* pa = a.raw();
  const Real* pb = b.raw();
  for (std::size_t i = 0, n = a.size(); i < n; ++i) pa[i] += pb[i];
}

/// (m×k)·(k×n) → (m×n).
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<Real> c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c.raw() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = a.raw()[i * k + p];
      const Real* brow = b.raw() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& t, Shape new_shape) {
  return t.reshape(std::move(new_shape));
}

}  // namespace msclstm
