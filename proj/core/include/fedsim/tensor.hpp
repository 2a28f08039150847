#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fedsim::nn {

/// Dense n-dimensional array of doubles, row-major. Carrier for images,
/// activations, kernels and biases.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);
  Tensor(std::vector<std::size_t> s, double fill);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  double& at2(std::size_t y, std::size_t x) { return data[y * shape[1] + x]; }
  double at2(std::size_t y, std::size_t x) const { return data[y * shape[1] + x]; }

  double& at3(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * shape[1] + y) * shape[2] + x];
  }
  double at3(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * shape[1] + y) * shape[2] + x];
  }

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

/// Throws std::invalid_argument naming `what` if t holds a NaN or infinity.
void ensure_finite(const Tensor& t, const char* what);
void ensure_finite(const std::vector<double>& v, const char* what);

}  // namespace fedsim::nn
