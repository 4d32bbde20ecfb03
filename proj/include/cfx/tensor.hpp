#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "cfx/errors.hpp"

namespace cfx {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major array of f64. Rank 1 covers vectors and scalars (numel 1),
// rank 2 covers matrices; nothing in the models needs more.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> values);

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(int rows, int cols, std::vector<double> values);
  // Entries drawn i.i.d. from N(0, stddev^2).
  static Tensor randn(Shape s, std::mt19937_64& rng, double stddev);

  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rows() const;
  int cols() const;

  double& at(int i);
  double at(int i) const;
  double& at(int i, int j);
  double at(int i, int j) const;

  // Value of a single-element tensor.
  double item() const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

// Throws DimError naming both shapes unless they are identical.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace cfx
