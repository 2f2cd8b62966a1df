#include "hatebm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "hatebm/error.hpp"

namespace hatebm {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? ", " : "") << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw ShapeError("tensor: " + std::to_string(values_.size()) + " values do not fill shape " +
                     shape_string(shape_));
  }
}

std::size_t Tensor::sample_size() const {
  if (shape_.empty() || shape_[0] == 0) {
    return 0;
  }
  return values_.size() / shape_[0];
}

std::span<double> Tensor::sample(std::size_t i) {
  const std::size_t n = sample_size();
  return std::span<double>(values_).subspan(i * n, n);
}

std::span<const double> Tensor::sample(std::size_t i) const {
  const std::size_t n = sample_size();
  return std::span<const double>(values_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw ShapeError("reshape " + shape_string(shape_) + " -> " + shape_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

Tensor Tensor::gather(std::span<const std::size_t> indices) const {
  Shape out_shape = shape_;
  out_shape[0] = indices.size();
  Tensor out(out_shape);
  const std::size_t n = sample_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= batch()) {
      throw ShapeError("gather index out of range");
    }
    std::copy_n(values_.data() + indices[i] * n, n, out.values_.data() + i * n);
  }
  return out;
}

void Tensor::scatter(std::span<const std::size_t> indices, const Tensor& rows) {
  const std::size_t n = sample_size();
  if (rows.batch() != indices.size() || rows.sample_size() != n) {
    throw ShapeError("scatter rows " + shape_string(rows.shape()) + " into " + shape_string(shape_));
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= batch()) {
      throw ShapeError("scatter index out of range");
    }
    std::copy_n(rows.values_.data() + i * n, n, values_.data() + indices[i] * n);
  }
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape_ == b.shape_ &&
         (a.values_.empty() ||
          std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(double)) == 0);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  out += b;
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  out -= b;
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values()) {
    v *= s;
  }
  return out;
}

Tensor& operator+=(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[i] += pb[i];
  }
  return a;
}

Tensor& operator-=(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[i] -= pb[i];
  }
  return a;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  const double* px = x.data();
  double* py = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    py[i] += alpha * px[i];
  }
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

double squared_norm(const Tensor& a) { return dot(a, a); }

std::vector<double> per_sample_squared_norm(const Tensor& a) {
  std::vector<double> out(a.batch(), 0.0);
  for (std::size_t i = 0; i < a.batch(); ++i) {
    for (double v : a.sample(i)) {
      out[i] += v * v;
    }
  }
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) {
    return 0.0;
  }
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace hatebm
