#include "mkc/graph.hpp"

#include "mkc/errors.hpp"

namespace mkc {

Var Graph::leaf(Tensor value, bool requires_grad, std::string name) {
  Node node;
  node.op = "leaf";
  node.name = std::move(name);
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (checked_) check_finite(node);
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::record(std::string_view op, Tensor value,
                  std::initializer_list<Var> parents, BackwardFn backward) {
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.graph() != this) {
      throw ConfigError("op '" + node.op + "' mixes nodes of different graphs");
    }
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  if (checked_) check_finite(node);
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::check_finite(const Node& node) const {
  const std::size_t bad = node.value.first_non_finite();
  if (bad != node.value.size()) {
    throw NumericError("non-finite value at element " + std::to_string(bad) +
                       " of '" + node.op + "' node " +
                       std::to_string(nodes_.size()) + " (shape " +
                       shape_str(node.value.shape()) + ")");
  }
}

Tensor Graph::grad(Var v) const {
  const Tensor& g = grads_[v.id()];
  if (g.shape() == nodes_[v.id()].value.shape() && !g.empty()) return g;
  return Tensor(nodes_[v.id()].value.shape());
}

void Graph::zero_grad() {
  for (auto& g : grads_) g = Tensor();
}

Tensor& Graph::grad_buffer(Var v) {
  Tensor& g = grads_[v.id()];
  if (g.size() != nodes_[v.id()].value.size() ||
      g.shape() != nodes_[v.id()].value.shape()) {
    g = Tensor(nodes_[v.id()].value.shape());
  }
  return g;
}

void Graph::accumulate(Var v, const Tensor& g) {
  if (!nodes_[v.id()].requires_grad) return;
  Tensor& buf = grad_buffer(v);
  if (g.size() != buf.size()) {
    throw ConfigError("gradient of shape " + shape_str(g.shape()) +
                      " does not match node shape " + shape_str(buf.shape()));
  }
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void Graph::backward(Var loss) {
  if (loss.value().size() != 1) {
    throw ConfigError("backward() needs a scalar loss, got shape " +
                      shape_str(loss.shape()));
  }
  zero_grad();
  grad_buffer(loss)[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.backward || grads_[id].empty()) continue;
    // Closures only write parent buffers (lower ids); grads_ never resizes here.
    node.backward(*this, grads_[id]);
  }
}

bool Graph::contains_op(std::string_view op) const {
  for (const auto& n : nodes_) {
    if (n.op == op) return true;
  }
  return false;
}

}  // namespace mkc
