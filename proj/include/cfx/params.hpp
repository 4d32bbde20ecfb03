#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cfx/tape.hpp"
#include "cfx/tensor.hpp"

namespace cfx {

// Named persistent model parameters. Creation order is the serialization
// order, so models must register parameters deterministically.
class ParamStore {
 public:
  int add(const std::string& name, Tensor value);
  int find(const std::string& name) const;  // -1 when absent
  int require(const std::string& name) const;

  int size() const { return static_cast<int>(values_.size()); }
  Tensor& value(int id) { return values_[static_cast<size_t>(id)]; }
  const Tensor& value(int id) const { return values_[static_cast<size_t>(id)]; }
  const std::string& name(int id) const { return names_[static_cast<size_t>(id)]; }

  // One leaf per parameter, index-aligned with param ids.
  std::vector<Var> bind(Tape& tape, bool requires_grad) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace cfx
