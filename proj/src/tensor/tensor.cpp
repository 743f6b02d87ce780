#include "stunet/tensor/tensor.hpp"

#include <cstring>

#include "stunet/common/error.hpp"

namespace stunet {

int64_t shape_numel(const Shape& shape) {
  if (shape.empty()) return 0;
  int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e < 1) throw InvalidInput("tensor extents must be >= 1, got " + shape_to_string(shape));
  }
}

}  // namespace

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
    throw InvalidInput("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_to_string(shape_));
  }
}

template <class T>
void BasicTensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <class T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw InvalidInput("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return BasicTensor(std::move(shape), data_);
}

template <class T>
bool BasicTensor<T>::operator==(const BasicTensor& other) const {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(T)) == 0);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace stunet
