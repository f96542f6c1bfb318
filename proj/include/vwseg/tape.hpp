#pragma once

#include <functional>
#include <cstdint>
#include <map>
#include <vector>

#include "vwseg/layers.hpp"

namespace vwseg::nn {

/// Parameter gradients keyed by the parameter record they belong to.
class Gradients {
 public:
  ParamGrads& of(const LayerParams& p);
  const ParamGrads* find(const LayerParams& p) const;
  bool empty() const { return grads_.empty(); }
  void clear() { grads_.clear(); }

 private:
  std::map<const LayerParams*, ParamGrads> grads_;
};

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Records a forward pass so reverse-mode gradients can be replayed. A tape
/// built with `record == false` only evaluates and refuses `backward`.
///
/// Parameters are referenced, not copied, and must outlive the tape.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  Var input(Tensor t);
  Var conv2d(Var x, const LayerParams& p);
  Var transposed_conv2(Var x, const LayerParams& p);
  Var max_pool2(Var x);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var concat(Var a, Var b);
  /// Scalar node holding the mean binary cross-entropy against `target`.
  Var bce_loss(Var pred, const Tensor& target);

  const Tensor& value(Var v) const;
  double scalar(Var v) const;

  /// Accumulates d(loss)/d(param) into `grads` for every parameter used.
  /// Throws GraphError when `loss` is not a recorded scalar, the tape did
  /// not record, or backward already ran.
  void backward(Var loss, Gradients& grads);

  /// Gradient of the loss with respect to a recorded value (after backward).
  const Tensor& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  /// When enabled, every relu appends its active flags and every max pool
  /// its argmax slots, in evaluation order. Two evaluations with equal
  /// regimes lie in the same smooth piece of the network.
  void track_regime(bool on) { track_ = on; }
  const std::vector<std::uint32_t>& regime() const { return regime_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;
  };

  Var push(Tensor value, std::function<void(Tape&)> back, const char* what);
  const Node& node(Var v) const;
  Tensor& grad_slot(int id);

  std::vector<Node> nodes_;
  Gradients* sink_ = nullptr;
  std::vector<std::uint32_t> regime_;
  bool record_;
  bool track_ = false;
  bool done_ = false;
};

}  // namespace vwseg::nn
