#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <string>
#include <vector>

namespace dsppnet {

namespace detail {

// Fixed-alignment allocator for tensor payloads.  Pinning every buffer to
// one SIMD alignment class keeps vectorized reductions (whose scalar
// prologue length depends on the pointer value) bitwise reproducible no
// matter where the heap happens to place an allocation.
template <typename T, std::size_t Alignment>
struct AlignedAllocator {
  static_assert((Alignment & (Alignment - 1)) == 0, "alignment must be a power of two");
  using value_type = T;

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, Alignment>&) noexcept {}
  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, Alignment>;
  };

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{Alignment}));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t{Alignment});
  }

  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) noexcept {
    return true;
  }
  friend bool operator!=(const AlignedAllocator&, const AlignedAllocator&) noexcept {
    return false;
  }
};

}  // namespace detail

// Tensor payload storage: a vector of doubles on a 64-byte boundary.
using DoubleBuffer = std::vector<double, detail::AlignedAllocator<double, 64>>;

// Dense n-dimensional array of 64-bit floats, row-major, 1-based rank with
// no implicit broadcasting.  All math in the library runs on doubles so that
// tolerance-based checks stay meaningful across platforms.
class Tensor {
 public:
  Tensor() = default;

  // Throws std::invalid_argument when `data` does not match the shape's
  // element count, when a dimension is not positive, or when a value is
  // non-finite.
  Tensor(std::vector<int> shape, const std::vector<double>& data);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value);
  // Same validation as the constructor, but adopts an already-aligned
  // payload (e.g. another tensor's values()) without conversion.
  static Tensor from_buffer(std::vector<int> shape, DoubleBuffer data);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  DoubleBuffer& values() { return data_; }
  const DoubleBuffer& values() const { return data_; }

  double& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Value of a single-element tensor; throws otherwise.
  double item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

 private:
  void validate_payload() const;

  std::vector<int> shape_;
  DoubleBuffer data_;
};

// Element count implied by a shape; validates that every dimension is a
// positive integer.
std::int64_t shape_size(const std::vector<int>& shape);

std::string shape_str(const std::vector<int>& shape);

}  // namespace dsppnet
