// Named parameter storage shared by all modules of a model. Trainable entries
// receive gradients from the tape and are updated by the optimizer;
// non-trainable entries (batch-norm running statistics) are forward-pass state
// that still travels with checkpoints.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "scgseg/errors.hpp"
#include "scgseg/rng.hpp"
#include "scgseg/tensor.hpp"

namespace scgseg {

template <typename Scalar>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool trainable = true;
  };

  int add(const std::string& name, Tensor<Scalar> value, bool trainable = true) {
    if (index_.count(name))
      throw ValidationError("duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor<Scalar>::zeros(value.shape);
    e.value = std::move(value);
    e.trainable = trainable;
    entries_.push_back(std::move(e));
    const int id = static_cast<int>(entries_.size()) - 1;
    index_[name] = id;
    return id;
  }

  int count() const { return static_cast<int>(entries_.size()); }

  int id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ValidationError("unknown parameter: " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Entry& entry(int id) { return entries_[static_cast<std::size_t>(id)]; }
  const Entry& entry(int id) const { return entries_[static_cast<std::size_t>(id)]; }

  Tensor<Scalar>& value(int id) { return entries_[id].value; }
  const Tensor<Scalar>& value(int id) const { return entries_[id].value; }
  Tensor<Scalar>& grad(int id) { return entries_[id].grad; }

  void zero_grad() {
    for (auto& e : entries_) e.grad.data.setZero();
  }

  // Trainable scalar count; running statistics do not count.
  std::int64_t trainable_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.value.size();
    return n;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Kaiming-style init for a conv / linear weight: N(0, sqrt(2 / fan_in)).
template <typename Scalar>
Tensor<Scalar> kaiming_normal(Shape shape, std::int64_t fan_in, Rng& rng) {
  Tensor<Scalar> t(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.data[i] = static_cast<Scalar>(stddev * rng.normal());
  return t;
}

}  // namespace scgseg
