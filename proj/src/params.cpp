#include "cfx/params.hpp"

#include "cfx/errors.hpp"

namespace cfx {

int ParamStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  const int id = static_cast<int>(values_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
  index_[name] = id;
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

int ParamStore::require(const std::string& name) const {
  const int id = find(name);
  if (id < 0) throw ConfigError("missing parameter: " + name);
  return id;
}

std::vector<Var> ParamStore::bind(Tape& tape, bool requires_grad) const {
  std::vector<Var> vars;
  vars.reserve(values_.size());
  for (const Tensor& t : values_) vars.push_back(tape.leaf(t, requires_grad));
  return vars;
}

}  // namespace cfx
