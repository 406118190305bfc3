#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mkc/tensor.hpp"

namespace mkc {

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the owning
// graph is alive.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Define-by-run reverse-mode tape. Nodes are appended in execution order,
// so every parent index precedes its child and a single reverse sweep
// visits each node once.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  // In checked mode every recorded value is scanned for NaN/Inf.
  explicit Graph(bool checked = false) : checked_(checked) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = false, std::string name = {});
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Appends an op node. `backward` is dropped when no parent requires a
  // gradient, so inference graphs keep no closures.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents,
             BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Gradient of the last backward() loss w.r.t. v; zeros if v was not reached.
  Tensor grad(Var v) const;

  // Reverse sweep from a single-element loss. Clears previous gradients.
  void backward(Var loss);
  void zero_grad();

  // Adds g into v's gradient buffer when v requires a gradient.
  void accumulate(Var v, const Tensor& g);
  // Mutable, zero-initialised gradient buffer for v.
  Tensor& grad_buffer(Var v);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op(int id) const { return nodes_[id].op; }
  const std::string& name(int id) const { return nodes_[id].name; }
  const std::vector<int>& parents(int id) const { return nodes_[id].parents; }
  bool contains_op(std::string_view op) const;
  bool checked() const { return checked_; }

 private:
  struct Node {
    std::string op;
    std::string name;
    std::vector<int> parents;
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_finite(const Node& node) const;

  bool checked_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

}  // namespace mkc
