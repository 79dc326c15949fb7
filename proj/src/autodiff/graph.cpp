#include <cassert>

#include "dtsda/autodiff.hpp"
#include "dtsda/error.hpp"

namespace dtsda::ad {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape, 0.0) {}

void Parameter::zero_grad() {
  if (grad.shape != value.shape) grad = Tensor(value.shape, 0.0);
  std::fill(grad.data.begin(), grad.data.end(), 0.0);
  has_grad = false;
}

const Tensor& Value::tensor() const { return graph_->value(id_); }

Value Graph::constant(Tensor t) {
  if (!t.all_finite()) throw NumericError("non-finite value in graph input");
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Value Graph::param(Parameter& p) {
  if (!p.value.all_finite()) throw NumericError("non-finite value in parameter " + p.name);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = p.requires_grad;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Value Graph::record(Tensor out, std::vector<NodeId> inputs, BackwardFn fn, const char* op) {
  if (!out.all_finite()) throw NumericError(std::string("non-finite output from ") + op);
  Node n;
  n.value = std::move(out);
  for (NodeId in : inputs) {
    // Inputs always precede their consumer, so the recording is acyclic.
    assert(in < nodes_.size());
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

std::vector<double>& Graph::grad(NodeId id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Graph::backward(const Value& loss) {
  if (&loss.graph() != this) throw ShapeError("loss belongs to a different graph");
  if (value(loss.id()).size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_str(value(loss.id()).shape));
  }
  grad(loss.id())[0] = 1.0;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (!n.param || !n.requires_grad) continue;
    Parameter& p = *n.param;
    if (!p.has_grad || p.grad.shape != p.value.shape) p.zero_grad();
    if (!n.grad.empty()) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad.data[i] += n.grad[i];
    }
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient for " + p.name);
    p.has_grad = true;
  }
  clear();
}

void Graph::clear() { nodes_.clear(); }

}  // namespace dtsda::ad
