#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace trapnet {

/// Dense row-major matrix of doubles. Vectors (images, hidden activations,
/// gradients, signatures) are stored as a single row.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor2D row(std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }

  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double linf_norm(std::span<const double> a);

/// Cosine similarity; throws DegenerateError if either vector is zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Throws ShapeError unless both tensors hold the same number of entries.
void require_same_size(const Tensor2D& a, const Tensor2D& b, const char* what);

}  // namespace trapnet
