#include "rxl/grad/tape.hpp"

#include <atomic>
#include <cmath>

namespace rxl::grad {

namespace {

std::atomic<std::uint64_t> g_next_serial{1};

void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s[i];
}

}  // namespace

// ---- ParameterSet ----------------------------------------------------------------------

ParameterSet::ParameterSet(const ParameterSet& other) {
  for (const Parameter& p : other.params_) add(p.name(), p.value());
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) {
    params_.clear();
    index_.clear();
    for (const Parameter& p : other.params_) add(p.name(), p.value());
  }
  return *this;
}

Parameter& ParameterSet::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw GradError("parameter '" + name + "' declared twice");
  index_.emplace(name, params_.size());
  return params_.emplace_back(name, std::move(value));
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw GradError("unknown parameter '" + name + "'");
  return params_[it->second];
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw GradError("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value().size();
  return n;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name() != other.params_[i].name()) return false;
    if (!(params_[i].value() == other.params_[i].value())) return false;
  }
  return true;
}

// ---- Gradients -------------------------------------------------------------------------

const Tensor* Gradients::find(const Parameter& p) const {
  auto it = index_.find(&p);
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

Tensor Gradients::get(const Parameter& p) const {
  if (const Tensor* g = find(p)) return *g;
  return Tensor(p.value().shape());
}

Tensor& Gradients::at(const Parameter& p) {
  auto it = index_.find(&p);
  if (it != index_.end()) return entries_[it->second].second;
  index_.emplace(&p, entries_.size());
  entries_.emplace_back(&p, Tensor(p.value().shape()));
  return entries_.back().second;
}

void Gradients::accumulate(const Parameter& p, const Tensor& g) {
  if (g.shape() != p.value().shape()) {
    throw ShapeError("gradient for '" + p.name() + "' has shape " + g.shape().str() +
                     " but parameter is " + p.value().shape().str());
  }
  add_into(at(p), g);
}

void Gradients::add(const Gradients& other) {
  for (const auto& [p, g] : other.entries_) accumulate(*p, g);
}

void Gradients::scale(double factor) {
  for (auto& [p, g] : entries_) {
    for (double& v : g.values()) v *= factor;
  }
}

double Gradients::norm() const {
  double s = 0.0;
  for (const auto& [p, g] : entries_) {
    for (double v : g.values()) s += v * v;
  }
  return std::sqrt(s);
}

// ---- Var / Tape ------------------------------------------------------------------------

const Tensor& Var::value() const {
  if (!tape_) throw GradError("value of an unbound Var");
  return tape_->value(id_);
}

Tape::Tape(Mode mode) : mode_(mode), serial_(g_next_serial.fetch_add(1)) {}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError("constant: non-finite input");
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::param(Parameter& p) {
  if (mode_ == Mode::kInference) {
    // Inference leaves still memoize so repeated use does not copy the tensor again.
    if (p.tape_serial_ == serial_) return Var(this, p.node_);
    Var v = constant(p.value());
    p.tape_serial_ = serial_;
    p.node_ = v.id();
    return v;
  }
  if (p.tape_serial_ == serial_) return Var(this, p.node_);
  if (!p.value().all_finite()) {
    throw NonFiniteError("param: parameter '" + p.name() + "' is not finite");
  }
  Node& n = nodes_.emplace_back();
  n.value = p.value();
  n.param = &p;
  n.needs_grad = true;
  p.tape_serial_ = serial_;
  p.node_ = static_cast<std::uint32_t>(nodes_.size() - 1);
  return Var(this, p.node_);
}

void Tape::check_owned(Var v, const char* op) const {
  if (v.tape() != this) {
    throw GradError(std::string(op) + ": input belongs to a different tape");
  }
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward,
                 const char* op) {
  bool needs = false;
  for (Var v : inputs) {
    check_owned(v, op);
    needs = needs || nodes_[v.id()].needs_grad;
  }
  if (!value.all_finite()) throw NonFiniteError(std::string(op) + ": non-finite result");
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backward backward,
                 const char* op) {
  bool needs = false;
  for (Var v : inputs) {
    check_owned(v, op);
    needs = needs || nodes_[v.id()].needs_grad;
  }
  if (!value.all_finite()) throw NonFiniteError(std::string(op) + ": non-finite result");
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Gradients Tape::backward(Var root) {
  if (root.tape() != this) throw GradError("backward: root was not produced on this tape");
  const Tensor& rv = nodes_[root.id()].value;
  if (rv.size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + rv.shape().str());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(root.id())[0] = 1.0;

  Gradients out;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.needs_grad) continue;
    if (n.backward) {
      // The adjoint may allocate parent buffers; `n` stays valid because deque growth
      // never happens during the reverse pass.
      n.backward(*this, n.grad);
    } else if (n.param) {
      out.accumulate(*n.param, n.grad);
    }
  }
  // Report leaves in first-use order for deterministic iteration.
  Gradients ordered;
  for (const Node& n : nodes_) {
    if (n.param) {
      if (const Tensor* g = out.find(*n.param)) {
        if (!ordered.find(*n.param)) ordered.accumulate(*n.param, *g);
      } else if (!ordered.find(*n.param)) {
        ordered.at(*n.param);
      }
    }
  }
  return ordered;
}

Tensor Tape::grad(Var v) const {
  check_owned(v, "grad");
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

}  // namespace rxl::grad
