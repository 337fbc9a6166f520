#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "soonet/errors.hpp"
#include "soonet/numerics/tape.hpp"
#include "soonet/numerics/tensor.hpp"

namespace soonet::num {

/// Ordered collection of named tensors: learnable weights, optimizer state,
/// anything that must be addressable by name for checking and serialization.
template <typename T>
class ParamStore {
 public:
  void add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw UsageError("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
  }

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_.at(i).first; }
  const Tensor<T>& tensor(std::size_t i) const { return entries_.at(i).second; }
  Tensor<T>& mutable_tensor(std::size_t i) { return entries_.at(i).second; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Tensor<T>& at(const std::string& name) const {
    auto i = find(name);
    if (!i) throw UsageError("unknown parameter '" + name + "'");
    return entries_[*i].second;
  }
  Tensor<T>& mutable_at(const std::string& name) {
    auto i = find(name);
    if (!i) throw UsageError("unknown parameter '" + name + "'");
    return entries_[*i].second;
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [n, t] : entries_) out.add(n, t.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// A ParamStore registered as leaves on one tape.
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParamStore<T>& store, bool requires_grad) : store_(&store) {
    vars_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      vars_.push_back(tape.leaf(store.tensor(i), requires_grad));
    }
  }

  Var<T> operator[](const std::string& name) const {
    auto i = store_->find(name);
    if (!i) throw UsageError("unknown parameter '" + name + "'");
    return vars_[*i];
  }
  bool contains(const std::string& name) const { return store_->find(name).has_value(); }

  const std::vector<Var<T>>& vars() const { return vars_; }
  const ParamStore<T>& store() const { return *store_; }

 private:
  const ParamStore<T>* store_;
  std::vector<Var<T>> vars_;
};

}  // namespace soonet::num
