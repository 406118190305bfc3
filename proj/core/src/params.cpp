#include "mkc/params.hpp"

#include "mkc/errors.hpp"

namespace mkc {

Tensor& ParameterSet::add(const std::string& name, Tensor value) {
  auto [it, inserted] = values_.emplace(name, std::move(value));
  if (!inserted) throw ConfigError("duplicate parameter '" + name + "'");
  names_.push_back(name);
  return it->second;
}

bool ParameterSet::contains(const std::string& name) const {
  return values_.count(name) != 0;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : values_) n += t.size();
  return n;
}

Var BoundParams::operator()(const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  Var v = graph_.leaf(params_.get(name), requires_grad_, name);
  leaves_.emplace(name, v);
  return v;
}

void BoundParams::bind(const std::string& name, Var v) {
  if (!params_.contains(name)) throw ConfigError("unknown parameter '" + name + "'");
  leaves_.insert_or_assign(name, v);
}

}  // namespace mkc
