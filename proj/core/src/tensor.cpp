#include "dsppnet/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace dsppnet {

std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor shape has non-positive dimension in " +
                                  shape_str(shape));
    }
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  out += "]";
  return out;
}

void Tensor::validate_payload() const {
  const std::int64_t expect = shape_size(shape_);
  if (expect != static_cast<std::int64_t>(data_.size())) {
    throw std::invalid_argument(
        "tensor data length " + std::to_string(data_.size()) +
        " does not match shape " + dsppnet::shape_str(shape_) + " (expected " +
        std::to_string(expect) + ")");
  }
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("tensor constructed with non-finite value");
    }
  }
}

Tensor::Tensor(std::vector<int> shape, const std::vector<double>& data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  validate_payload();
}

Tensor Tensor::from_buffer(std::vector<int> shape, DoubleBuffer data) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  t.validate_payload();
  return t;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  const std::int64_t n = shape_size(shape);
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_.assign(static_cast<std::size_t>(n), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  if (!std::isfinite(value)) {
    throw std::invalid_argument("tensor fill value is non-finite");
  }
  const std::int64_t n = shape_size(shape);
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_.assign(static_cast<std::size_t>(n), value);
  return t;
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw std::invalid_argument("tensor axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str());
  }
  return shape_[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw std::invalid_argument("item() called on tensor of shape " + shape_str());
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return dsppnet::shape_str(shape_); }

}  // namespace dsppnet
