// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/autograd.hpp"

#include <algorithm>

#include "msgen/errors.hpp"

namespace msgen {

std::size_t ParameterStore::add(std::string name, Tensor init, bool decay) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Tensor grad(init.shape(), 0.0);
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad), decay});
  return params_.size() - 1;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

Parameter* ParameterStore::find(std::string_view name) {
  return const_cast<Parameter*>(std::as_const(*this).find(name));
}

std::ptrdiff_t ParameterStore::index_of(const Parameter* p) const noexcept {
  if (params_.empty() || p < params_.data() || p >= params_.data() + params_.size()) return -1;
  return p - params_.data();
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParameterStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

const Tensor& Var::value() const { return g_->value(*this); }
const Tensor& Var::grad() const { return g_->grad(*this); }
bool Var::requires_grad() const { return g_->requires_grad(*this); }

Graph::Node& Graph::node(Var v) {
  if (v.graph() != this || v.id() >= nodes_.size()) throw std::logic_error("Var does not belong to this graph");
  return nodes_[v.id()];
}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph() != this || v.id() >= nodes_.size()) throw std::logic_error("Var does not belong to this graph");
  return nodes_[v.id()];
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::parameter(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{Tensor{}, {}, {}, track_, &p});
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  bool needs = false;
  if (track_) {
    for (const Var& in : inputs) needs = needs || node(in).requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : Backward{}, needs, nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, Backward fn) {
  bool needs = false;
  if (track_) {
    for (const Var& in : inputs) needs = needs || node(in).requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : Backward{}, needs, nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Tensor& Graph::value(Var v) const { return node(v).val(); }

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) throw std::logic_error("gradient requested for a node that received none");
  return n.grad;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Graph::grad_mut(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor(n.val().shape(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss, double seed) {
  if (!track_) throw std::logic_error("backward on a graph built without gradient tracking");
  Node& root = node(loss);
  if (root.val().size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(root.val().shape()));
  }
  if (!root.requires_grad) return;
  grad_mut(loss)[0] += seed;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

void Graph::accumulate_into(ParameterStore& store, double scale) const {
  for (const auto& [param, id] : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    const auto idx = store.index_of(param);
    if (idx < 0) throw std::logic_error("graph parameter does not belong to the given store");
    Tensor& g = store[static_cast<std::size_t>(idx)].grad;
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += scale * n.grad[k];
  }
}

}  // namespace msgen
