// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision tensors and the reverse-mode recording tape.
// A Tape is a Wengert list: nodes are appended in execution order, so the
// list itself is a topological order and backward() is a single reverse
// sweep. Tensors are value types over shared immutable storage; a tensor
// created by a recorded op carries the id of its tape node.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace phredgan {

std::string shape_str(std::span<const int> shape);

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double value);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int size() const;
  bool defined() const { return data_ != nullptr; }

  // lvalues only: a span into a temporary tensor would dangle
  std::span<const double> values() const& { return {data_->data(), data_->size()}; }
  std::span<const double> values() const&& = delete;
  double at(std::size_t flat) const { return (*data_)[flat]; }
  // scalar tensors only
  double item() const;

  // rank-2 accessor, row-major
  double at(int r, int c) const { return (*data_)[static_cast<std::size_t>(r) * shape_[1] + c]; }

  int node() const { return node_; }
  bool recorded() const { return node_ >= 0; }
  // same storage, no tape affiliation; lets a value computed on one record
  // feed another as a constant
  Tensor detached() const {
    Tensor t = *this;
    t.node_ = -1;
    return t;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  // Writable view of the backing store. Reserved for the parameter store's
  // single writer and the tape's leaf rebinding; recorded intermediate
  // values must be treated as immutable.
  std::span<double> mutable_values() & { return {data_->data(), data_->size()}; }
  std::span<double> mutable_values() && = delete;

 private:
  friend class Tape;
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> data_;
  int node_ = -1;
};

enum class OpTag : std::uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kAffine,
  kMatmul,
  kVecmat,
  kAddRowvec,
  kConcat,
  kSlice,
  kRows,
  kReshape,
  kSigmoid,
  kTanh,
  kSoftmax,
  kLog,
  kSum,
  kMean,
  kCustom,
};

class Tape;

// Recompute the node value from current input values (replay path).
using ForwardFn = std::function<Tensor(const Tape&, const std::vector<int>& inputs)>;
// Accumulate input gradients given this node's id; reads values and the
// output gradient through the tape so replayed values stay authoritative.
using BackwardFn = std::function<void(Tape&, int self)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf holding `value`. Trainable leaves are guaranteed an
  // entry in the gradient map after backward().
  Tensor leaf(const Tensor& value, bool trainable = false);

  // Records an op node. `fwd` is invoked immediately to produce the value,
  // so replay() re-executes the exact same code path.
  Tensor record(OpTag tag, std::vector<int> inputs, ForwardFn fwd, BackwardFn bwd);

  // Imports a tensor as an input node id, recording unrecorded tensors as
  // constants (deduplicated by storage).
  int import_input(const Tensor& t);

  void backward(const Tensor& output);
  void zero_grads();

  // Gradient of a recorded tensor; zeros if the node never participated.
  Tensor grad(const Tensor& t) const;
  bool has_grad(const Tensor& t) const;

  // Re-executes every op node in order against current leaf values.
  void replay();
  void set_leaf(const Tensor& leaf, std::span<const double> values);

  const Tensor& value_of(int node) const { return nodes_[node].value; }
  std::span<const double> grad_of(int node) const;
  void accumulate_grad(int node, std::span<const double> g);
  std::vector<double>& grad_buffer(int node);

  std::size_t num_nodes() const { return nodes_.size(); }
  bool owns(const Tensor& t) const;

  const std::vector<int>& trainable_leaves() const { return trainable_; }

 private:
  struct Node {
    OpTag tag = OpTag::kLeaf;
    std::vector<int> inputs;
    Tensor value;
    bool trainable = false;
    ForwardFn forward;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::vector<int> trainable_;
  std::unordered_map<const void*, int> constant_ids_;
  static const std::vector<double> kEmpty;
};

}  // namespace phredgan
