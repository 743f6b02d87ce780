#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stunet {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major N-d array. Activations are laid out N, C, D, H, W; conv
// kernels Cout, Cin, kD, kH, kW. A default-constructed tensor is empty
// (rank 0, no data) and is used as "absent".
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor scalar(T v) { return BasicTensor({1}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  size_t rank() const noexcept { return shape_.size(); }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  int64_t numel() const noexcept { return static_cast<int64_t>(data_.size()); }
  bool empty() const noexcept { return shape_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 5-d element access (n, c, d, h, w).
  T& at(int64_t n, int64_t c, int64_t d, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(offset5(n, c, d, h, w))];
  }
  const T& at(int64_t n, int64_t c, int64_t d, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(offset5(n, c, d, h, w))];
  }

  void fill(T v);
  BasicTensor reshaped(Shape shape) const;

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  // Bitwise equality of shape and payload.
  bool operator==(const BasicTensor& other) const;

 private:
  int64_t offset5(int64_t n, int64_t c, int64_t d, int64_t h, int64_t w) const {
    return (((n * shape_[1] + c) * shape_[2] + d) * shape_[3] + h) * shape_[4] + w;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace stunet
