#pragma once

#include <map>
#include <string>
#include <vector>

#include "mkc/graph.hpp"

namespace mkc {

// Ordered collection of named parameter tensors. Iteration order is
// insertion order, which fixes checkpoint layout and optimizer state order.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t total_elements() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor> values_;
};

// Binds a ParameterSet into one Graph: each parameter becomes a leaf the
// first time it is requested.
class BoundParams {
 public:
  BoundParams(Graph& graph, const ParameterSet& params, bool requires_grad)
      : graph_(graph), params_(params), requires_grad_(requires_grad) {}

  Var operator()(const std::string& name);
  // Uses `v` for `name` from now on, e.g. a leaf owned by a gradient check.
  void bind(const std::string& name, Var v);
  Graph& graph() { return graph_; }
  const std::map<std::string, Var>& leaves() const { return leaves_; }

 private:
  Graph& graph_;
  const ParameterSet& params_;
  bool requires_grad_;
  std::map<std::string, Var> leaves_;
};

}  // namespace mkc
