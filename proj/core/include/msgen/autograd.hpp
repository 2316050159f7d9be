// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "msgen/tensor.hpp"

namespace msgen {

/// A learnable tensor and its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = false;  // receives decoupled weight decay
};

/// Ordered, name-unique collection of parameters. Indices are stable once the
/// owning model is constructed.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor init, bool decay = false);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Parameter* find(std::string_view name) const;
  Parameter* find(std::string_view name);
  std::ptrdiff_t index_of(const Parameter* p) const noexcept;

  void zero_grad();
  std::size_t scalar_count() const noexcept;

 private:
  std::vector<Parameter> params_;
};

class Graph;

/// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::uint32_t id) : g_(g), id_(id) {}

  bool valid() const noexcept { return g_ != nullptr; }
  Graph* graph() const noexcept { return g_; }
  std::uint32_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Graph* g_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid topological order for backpropagation.
///
/// A graph built with `track_gradients = false` records values only; it is the
/// inference path and never stores backward closures.
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor& out_grad)>;

  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool tracks_gradients() const noexcept { return track_; }

  Var constant(Tensor value);
  /// Leaf bound to a parameter. Repeated calls for the same parameter return
  /// the same node.
  Var parameter(const Parameter& p);

  /// Appends an op result. `fn` is dropped unless some input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn);
  Var record(Tensor value, const std::vector<Var>& inputs, Backward fn);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient buffer of `v`, allocated as zeros on first use.
  Tensor& grad_mut(Var v);

  /// Backpropagates from a 1x1 node with seed gradient `seed`.
  void backward(Var loss, double seed = 1.0);

  /// Adds `scale` times each parameter leaf's gradient into the matching
  /// entry of `store`.
  void accumulate_into(ParameterStore& store, double scale = 1.0) const;

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
    const Parameter* param = nullptr;  // parameter leaves read the value in place

    const Tensor& val() const { return param ? param->value : value; }
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  bool track_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
};

}  // namespace msgen
