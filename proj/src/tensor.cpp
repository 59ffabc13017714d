// SPDX-License-Identifier: Apache-2.0

#include "phredgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace phredgan {

const std::vector<double> Tape::kEmpty;

std::string shape_str(std::span<const int> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

static std::size_t checked_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  std::size_t n = checked_size(shape);
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(n, 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : *t.data_) v = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
  std::size_t n = checked_size(shape);
  if (n != values.size())
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

int Tensor::size() const {
  return static_cast<int>(data_ ? data_->size() : 0);
}

double Tensor::item() const {
  if (!data_ || data_->size() != 1)
    throw std::invalid_argument("tensor: item() requires a scalar, got shape " + shape_str(shape_));
  return (*data_)[0];
}

bool Tensor::all_finite() const {
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tape::leaf(const Tensor& value, bool trainable) {
  if (!value.defined()) throw std::invalid_argument("tape: leaf from undefined tensor");
  Node n;
  n.tag = OpTag::kLeaf;
  n.value = value;
  n.trainable = trainable;
  n.value.node_ = static_cast<int>(nodes_.size());
  Tensor out = n.value;
  if (trainable) trainable_.push_back(out.node_);
  // tensors sharing this storage resolve to this leaf when used as op
  // inputs, so parameters registered up front collect their gradients here
  constant_ids_.emplace(value.data_.get(), out.node_);
  nodes_.push_back(std::move(n));
  return out;
}

int Tape::import_input(const Tensor& t) {
  if (!t.defined()) throw std::invalid_argument("tape: op input is undefined");
  if (t.node_ >= 0) {
    if (static_cast<std::size_t>(t.node_) >= nodes_.size() ||
        nodes_[t.node_].value.data_ != t.data_)
      throw std::invalid_argument("tape: input tensor belongs to a different record");
    return t.node_;
  }
  const void* key = t.data_.get();
  auto it = constant_ids_.find(key);
  if (it != constant_ids_.end()) return it->second;
  Node n;
  n.tag = OpTag::kConstant;
  n.value = t;
  n.value.node_ = static_cast<int>(nodes_.size());
  int id = n.value.node_;
  constant_ids_.emplace(key, id);
  nodes_.push_back(std::move(n));
  return id;
}

Tensor Tape::record(OpTag tag, std::vector<int> inputs, ForwardFn fwd, BackwardFn bwd) {
  Node n;
  n.tag = tag;
  n.inputs = std::move(inputs);
  n.forward = std::move(fwd);
  n.backward = std::move(bwd);
  n.value = n.forward(*this, n.inputs);
  n.value.node_ = static_cast<int>(nodes_.size());
  Tensor out = n.value;
  nodes_.push_back(std::move(n));
  return out;
}

bool Tape::owns(const Tensor& t) const {
  return t.node_ >= 0 && static_cast<std::size_t>(t.node_) < nodes_.size() &&
         nodes_[t.node_].value.data_ == t.data_;
}

void Tape::zero_grads() {
  grads_.assign(nodes_.size(), {});
}

std::span<const double> Tape::grad_of(int node) const {
  if (static_cast<std::size_t>(node) >= grads_.size() || grads_[node].empty()) return {};
  return {grads_[node].data(), grads_[node].size()};
}

std::vector<double>& Tape::grad_buffer(int node) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  auto& g = grads_[node];
  if (g.empty()) g.assign(nodes_[node].value.data_->size(), 0.0);
  return g;
}

void Tape::accumulate_grad(int node, std::span<const double> g) {
  auto& buf = grad_buffer(node);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void Tape::backward(const Tensor& output) {
  if (!owns(output)) throw std::invalid_argument("tape: backward output does not belong to this record");
  if (output.size() != 1)
    throw std::invalid_argument("tape: backward requires a scalar output, got shape " +
                                shape_str(output.shape()));
  grads_.assign(nodes_.size(), {});
  grad_buffer(output.node_)[0] = 1.0;
  for (int id = output.node_; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.backward) continue;
    if (grads_[id].empty()) continue;  // node did not contribute to the output
    n.backward(*this, id);
  }
  // trainable leaves always appear in the gradient map, zeros if untouched
  for (int leaf : trainable_) grad_buffer(leaf);
}

bool Tape::has_grad(const Tensor& t) const {
  return owns(t) && static_cast<std::size_t>(t.node_) < grads_.size() && !grads_[t.node_].empty();
}

Tensor Tape::grad(const Tensor& t) const {
  if (!owns(t)) throw std::invalid_argument("tape: grad of a tensor outside this record");
  if (static_cast<std::size_t>(t.node_) >= grads_.size() || grads_[t.node_].empty())
    return Tensor::zeros(t.shape());
  return Tensor::from(t.shape(), grads_[t.node_]);
}

void Tape::replay() {
  for (auto& n : nodes_) {
    if (!n.forward) continue;
    int id = n.value.node_;
    n.value = n.forward(*this, n.inputs);
    n.value.node_ = id;
  }
}

void Tape::set_leaf(const Tensor& leaf, std::span<const double> values) {
  if (!owns(leaf)) throw std::invalid_argument("tape: set_leaf on a tensor outside this record");
  Node& n = nodes_[leaf.node_];
  if (n.forward) throw std::invalid_argument("tape: set_leaf target is not a leaf");
  if (values.size() != n.value.data_->size())
    throw std::invalid_argument("tape: set_leaf value count mismatch");
  // In-place write keeps every handle to this leaf (including the caller's
  // parameter tensor) pointing at the updated storage.
  std::copy(values.begin(), values.end(), n.value.data_->begin());
}

}  // namespace phredgan
