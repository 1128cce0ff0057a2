#include "trapnet/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "trapnet/error.hpp"

namespace trapnet {

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("tensor of shape " + shape_string() + " given " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor2D Tensor2D::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor2D(1, n, std::move(values));
}

bool Tensor2D::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Tensor2D::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot product of vectors with sizes " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double linf_norm(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateError("cosine similarity with a zero vector");
  }
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

void require_same_size(const Tensor2D& a, const Tensor2D& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": size mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace trapnet
