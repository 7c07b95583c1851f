#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hfgcn/tensor.hpp"

namespace hfgcn {

struct Node {
  Tensor value;
  Tensor grad;  // empty until the first adjoint reaches this node
  bool requires_grad = false;

  /// Zero-initialised gradient buffer matching value's shape.
  Tensor& grad_buffer();
};

/// Handle to a value produced on (or fed into) a Tape.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Ordered record of executed ops. backward() replays adjoints in exact
/// reverse order and then clears the record.
class Tape {
 public:
  enum class Mode { record, inference };

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::record; }

  Var constant(Tensor value) const;
  Var variable(Tensor value) const;

  /// Result node for an op; requires_grad is set when any input needs it
  /// and the tape is recording.
  Var result(Tensor value, std::initializer_list<const Var*> inputs) const;

  void record(std::function<void()> adjoint);
  void backward(const Var& loss);

  std::size_t size() const { return adjoints_.size(); }

 private:
  Mode mode_;
  std::vector<std::function<void()>> adjoints_;
  bool consumed_ = false;
};

/// A trainable leaf. The node persists across tapes; gradients accumulate
/// until zero_grad().
class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool decay = true);

  const std::string& name() const { return name_; }
  bool decays() const { return decay_; }
  const Var& var() const { return var_; }
  const Tensor& value() const { return var_.value(); }
  Tensor& mutable_value() { return var_.mutable_value(); }
  const Tensor& grad() const { return var_.grad(); }
  Tensor& mutable_grad() { return var_.node()->grad_buffer(); }
  bool has_grad() const { return !var_.grad().empty(); }
  void zero_grad() { var_.node()->grad = Tensor(); }

 private:
  std::string name_;
  bool decay_;
  Var var_;
};

}  // namespace hfgcn
