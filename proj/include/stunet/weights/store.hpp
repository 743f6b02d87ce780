#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stunet/tensor/tensor.hpp"

namespace stunet {

class NetworkGraph;

// Named tensors in insertion order. Shapes are fixed once a name is
// inserted; values may be updated in place (training).
class WeightStore {
 public:
  static constexpr uint32_t kFormatVersion = 1;

  void insert(const std::string& name, Tensor tensor);
  // Replaces the values of an existing entry; the shape must match.
  void assign(const std::string& name, Tensor tensor);

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  // In-place access for optimizers. Callers must not change the shape.
  Tensor& mutable_at(const std::string& name);

  const std::vector<std::string>& names() const noexcept { return order_; }
  size_t size() const noexcept { return order_.size(); }
  int64_t total_elements() const;

  const std::string& config_digest() const noexcept { return config_digest_; }
  void set_config_digest(std::string digest) { config_digest_ = std::move(digest); }

  // Same names in the same order with bit-identical tensors.
  bool operator==(const WeightStore& other) const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor> tensors_;
  std::string config_digest_;
};

// Throws MissingParameter for declared names absent from `store` (and for
// store names the graph does not declare), ShapeMismatch for wrong shapes.
void check_store(const NetworkGraph& graph, const WeightStore& store);

}  // namespace stunet
