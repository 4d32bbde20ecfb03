#include "cfx/tensor.hpp"

#include <cmath>
#include <sstream>

namespace cfx {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw DimError("non-positive dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out << "x";
    out << s[i];
  }
  out << "]";
  return out.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                   " values");
  }
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = v;
  return t;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::randn(Shape s, std::mt19937_64& rng, double stddev) {
  Tensor t(std::move(s));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& x : t.data) x = dist(rng);
  return t;
}

int Tensor::rows() const {
  if (rank() != 2) throw DimError("rows() on tensor of shape " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw DimError("cols() on tensor of shape " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(int i) {
  if (rank() != 1) throw DimError("1-d index into tensor of shape " + shape_str(shape));
  return data[static_cast<size_t>(i)];
}

double Tensor::at(int i) const { return const_cast<Tensor*>(this)->at(i); }

double& Tensor::at(int i, int j) {
  if (rank() != 2) throw DimError("2-d index into tensor of shape " + shape_str(shape));
  return data[static_cast<size_t>(i) * shape[1] + j];
}

double Tensor::at(int i, int j) const { return const_cast<Tensor*>(this)->at(i, j); }

double Tensor::item() const {
  if (numel() != 1) throw DimError("item() on tensor of shape " + shape_str(shape));
  return data[0];
}

bool Tensor::all_finite() const {
  for (double x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimError(std::string(op) + ": shape " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
}

}  // namespace cfx
