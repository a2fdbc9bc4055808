#pragma once

// Named parameter registry: the unit of checkpointing, weight transfer and
// optimizer state. Iteration order is registration order and is part of the
// determinism contract.

#include <string>
#include <utility>
#include <vector>

#include "s2sp/tensor.hpp"

namespace s2sp {

template <typename S>
class ParamStoreT {
 public:
  void add(const std::string& name, const TensorPtr<S>& t) {
    if (find(name)) throw ContractError("duplicate parameter name: " + name);
    t->requires_grad = true;
    items_.emplace_back(name, t);
  }

  TensorPtr<S> find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return t;
    return nullptr;
  }

  TensorPtr<S> at(const std::string& name) const {
    auto t = find(name);
    if (!t) throw ContractError("unknown parameter: " + name);
    return t;
  }

  const std::vector<std::pair<std::string, TensorPtr<S>>>& items() const { return items_; }
  size_t size() const { return items_.size(); }

  void zero_grads() {
    for (auto& [n, t] : items_) t->zero_grad();
  }

  int64_t numel() const {
    int64_t n = 0;
    for (const auto& [name, t] : items_) n += t->numel();
    return n;
  }

  // Deep copy of parameter values (names and shapes preserved, grads dropped).
  ParamStoreT snapshot() const {
    ParamStoreT out;
    for (const auto& [name, t] : items_)
      out.add(name, make_tensor<S>(t->shape, t->data, true));
    return out;
  }

  // Copies values from a snapshot with identical names/shapes back in place.
  void restore(const ParamStoreT& snap) {
    if (snap.size() != size()) throw ContractError("parameter snapshot size mismatch");
    for (size_t i = 0; i < items_.size(); ++i) {
      const auto& [name, src] = snap.items()[i];
      auto& [dst_name, dst] = items_[i];
      if (name != dst_name || src->shape != dst->shape)
        throw ContractError("parameter snapshot layout mismatch at " + name);
      dst->data = src->data;
    }
  }

  uint64_t value_hash() const {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& [name, t] : items_) {
      h = fnv1a64(name, h);
      h = fnv1a64(t->data.data(), t->data.size() * sizeof(S), h);
    }
    return h;
  }

 private:
  std::vector<std::pair<std::string, TensorPtr<S>>> items_;
};

using ParamStore = ParamStoreT<float>;

}  // namespace s2sp
