#include "stunet/weights/store.hpp"

#include <set>

#include "stunet/arch/graph.hpp"
#include "stunet/common/error.hpp"

namespace stunet {

void WeightStore::insert(const std::string& name, Tensor tensor) {
  if (name.empty()) throw InvalidInput("weight name must not be empty");
  if (tensor.empty()) throw InvalidInput("weight '" + name + "' has no shape");
  auto [it, inserted] = tensors_.emplace(name, std::move(tensor));
  if (!inserted) throw InvalidInput("weight '" + name + "' already present");
  order_.push_back(name);
}

void WeightStore::assign(const std::string& name, Tensor tensor) {
  Tensor& slot = mutable_at(name);
  if (slot.shape() != tensor.shape()) {
    throw ShapeMismatch({{name, shape_to_string(slot.shape()), shape_to_string(tensor.shape())}});
  }
  slot = std::move(tensor);
}

const Tensor& WeightStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw MissingParameter({name});
  return it->second;
}

Tensor& WeightStore::mutable_at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw MissingParameter({name});
  return it->second;
}

int64_t WeightStore::total_elements() const {
  int64_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.numel();
  return n;
}

bool WeightStore::operator==(const WeightStore& other) const {
  if (order_ != other.order_) return false;
  for (const auto& name : order_) {
    if (!(tensors_.at(name) == other.tensors_.at(name))) return false;
  }
  return true;
}

void check_store(const NetworkGraph& graph, const WeightStore& store) {
  std::vector<std::string> missing;
  std::vector<ShapeMismatch::Entry> wrong;
  std::set<std::string> declared;
  for (const auto& p : graph.parameters()) {
    declared.insert(p.name);
    if (!store.contains(p.name)) {
      missing.push_back(p.name);
    } else if (store.at(p.name).shape() != p.shape) {
      wrong.push_back({p.name, shape_to_string(p.shape), shape_to_string(store.at(p.name).shape())});
    }
  }
  for (const auto& name : store.names()) {
    if (!declared.count(name)) missing.push_back(name);
  }
  if (!missing.empty()) throw MissingParameter(std::move(missing));
  if (!wrong.empty()) throw ShapeMismatch(std::move(wrong));
}

}  // namespace stunet
