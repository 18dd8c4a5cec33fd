#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rxl/grad/tensor.hpp"

namespace rxl::grad {

class Tape;

// A named trainable tensor. Addresses are stable for the lifetime of the owning ParameterSet.
class Parameter {
 public:
  Parameter(std::string name, Tensor value) : name_(std::move(name)), value_(std::move(value)) {}

  const std::string& name() const { return name_; }
  const Tensor& value() const { return value_; }
  Tensor& value() { return value_; }

 private:
  friend class Tape;
  std::string name_;
  Tensor value_;
  // Memo of the leaf node this parameter occupies on the most recent tape that used it.
  std::uint64_t tape_serial_ = 0;
  std::uint32_t node_ = 0;
};

// Ordered collection of parameters; iteration order is declaration order.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter& add(const std::string& name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t total_elements() const;
  bool operator==(const ParameterSet& other) const;

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Gradient map keyed by parameter; insertion order follows first use on the tape.
class Gradients {
 public:
  // Returns nullptr when the parameter did not participate.
  const Tensor* find(const Parameter& p) const;
  // Gradient of p, or zeros of p's shape when it did not participate.
  Tensor get(const Parameter& p) const;
  Tensor& at(const Parameter& p);

  void accumulate(const Parameter& p, const Tensor& g);
  void add(const Gradients& other);
  void scale(double factor);
  double norm() const;
  std::size_t size() const { return entries_.size(); }

  const std::vector<std::pair<const Parameter*, Tensor>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<const Parameter*, Tensor>> entries_;
  std::unordered_map<const Parameter*, std::size_t> index_;
};

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Define-by-run tape. Nodes are appended in evaluation order, which is a valid topological order.
class Tape {
 public:
  enum class Mode { kTrain, kInference };
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(Mode mode = Mode::kTrain);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const { return mode_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor value);
  // Leaf bound to a parameter. Reusing the same parameter returns the same node.
  // In inference mode the leaf is a constant copy.
  Var param(Parameter& p);

  // Records an operation result. `backward` is dropped when no input needs gradients.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward, const char* op);
  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward, const char* op);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  // Gradient buffer of a node, allocated as zeros on first access during backward.
  Tensor& grad_buffer(std::uint32_t id);

  // Reverse pass from a scalar root. Resets all node gradients first, so repeated calls
  // over the same tape return identical results.
  Gradients backward(Var root);

  // Gradient of the last backward root w.r.t. an arbitrary node (zeros if none flowed).
  Tensor grad(Var v) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  void check_owned(Var v, const char* op) const;

  Mode mode_;
  std::uint64_t serial_;
  std::deque<Node> nodes_;
};

}  // namespace rxl::grad
