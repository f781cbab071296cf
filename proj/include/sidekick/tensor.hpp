#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sidekick/common.hpp"

namespace sidekick {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Real is double in test mode, float in train mode.
template <typename Real>
struct Tensor {
  Shape shape;
  std::vector<Real> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), Real(0)) {}
  Tensor(Shape s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape))
      throw ShapeMismatchError("tensor data length does not match shape " +
                               shape_str(shape));
  }

  std::size_t numel() const { return data.size(); }
  Real* ptr() { return data.data(); }
  const Real* ptr() const { return data.data(); }
  Real& operator[](std::size_t i) { return data[i]; }
  const Real& operator[](std::size_t i) const { return data[i]; }

  void fill(Real v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(Real(0)); }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  void check_finite(const std::string& what) const {
    if (!all_finite()) throw NonFiniteError("non-finite values in " + what);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = Other(data[i]);
    return out;
  }
};

template <typename Real>
bool same_shape(const Tensor<Real>& a, const Tensor<Real>& b) {
  return a.shape == b.shape;
}

template <typename Real>
void require_shape(const Tensor<Real>& t, const Shape& s, const std::string& what) {
  if (t.shape != s)
    throw ShapeMismatchError(what + ": expected " + shape_str(s) + ", got " +
                             shape_str(t.shape));
}

}  // namespace sidekick
