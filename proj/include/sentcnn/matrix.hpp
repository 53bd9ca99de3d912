#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace sentcnn {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t i) {
    assert(i < rows);
    return {data.data() + i * cols, cols};
  }
  std::span<const double> row(std::size_t i) const {
    assert(i < rows);
    return {data.data() + i * cols, cols};
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace sentcnn
