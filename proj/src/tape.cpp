#include "vwseg/tape.hpp"

namespace vwseg::nn {

ParamGrads& Gradients::of(const LayerParams& p) {
  auto it = grads_.find(&p);
  if (it == grads_.end()) it = grads_.emplace(&p, zero_grads_like(p)).first;
  return it->second;
}

const ParamGrads* Gradients::find(const LayerParams& p) const {
  auto it = grads_.find(&p);
  return it == grads_.end() ? nullptr : &it->second;
}

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error(ErrorCode::GraphError, "variable does not belong to this tape");
  }
  return nodes_[v.id];
}

Tensor& Tape::grad_slot(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Var Tape::push(Tensor value, std::function<void(Tape&)> back, const char* what) {
  require_finite(value, what);
  if (!record_) back = nullptr;
  nodes_.push_back({std::move(value), Tensor(), std::move(back)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const auto& t = node(v).value;
  if (t.size() != 1) throw Error(ErrorCode::GraphError, "value is not a scalar");
  return t.data()[0];
}

Var Tape::input(Tensor t) { return push(std::move(t), nullptr, "input"); }

Var Tape::conv2d(Var x, const LayerParams& p) {
  Tensor y = nn::conv2d(value(x), p);
  const int xi = x.id;
  const LayerParams* pp = &p;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(y),
              [xi, pp, self](Tape& t) {
                const Tensor& dy = t.nodes_[self].grad;
                const Tensor& xv = t.nodes_[xi].value;
                conv2d_param_grad(xv, dy, t.sink_->of(*pp), pp->kernel_size());
                add_into(t.grad_slot(xi), conv2d_input_grad(dy, *pp, xv.shape().h, xv.shape().w));
              },
              p.name.c_str());
}

Var Tape::transposed_conv2(Var x, const LayerParams& p) {
  Tensor y = nn::transposed_conv2(value(x), p);
  const int xi = x.id;
  const LayerParams* pp = &p;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(y),
              [xi, pp, self](Tape& t) {
                const Tensor& dy = t.nodes_[self].grad;
                transposed_conv2_param_grad(t.nodes_[xi].value, dy, t.sink_->of(*pp));
                add_into(t.grad_slot(xi), strided_conv2(dy, *pp));
              },
              p.name.c_str());
}

Var Tape::max_pool2(Var x) {
  auto r = nn::max_pool2(value(x));
  if (track_) regime_.insert(regime_.end(), r.argmax.begin(), r.argmax.end());
  const int xi = x.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(r.out),
              [xi, self, argmax = std::move(r.argmax)](Tape& t) {
                add_into(t.grad_slot(xi), max_pool2_backward(t.nodes_[self].grad, argmax,
                                                             t.nodes_[xi].value.shape()));
              },
              "max_pool2");
}

Var Tape::relu(Var x) {
  Tensor y = nn::relu(value(x));
  if (track_) {
    for (double v : value(x).values()) regime_.push_back(v > 0.0);
  }
  const int xi = x.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(y),
              [xi, self](Tape& t) {
                const Tensor& dy = t.nodes_[self].grad;
                const Tensor& xv = t.nodes_[xi].value;
                Tensor& dx = t.grad_slot(xi);
                for (std::size_t i = 0; i < dx.size(); ++i) {
                  if (xv.data()[i] > 0.0) dx.data()[i] += dy.data()[i];
                }
              },
              "relu");
}

Var Tape::sigmoid(Var x) {
  Tensor y = nn::sigmoid(value(x));
  const int xi = x.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(y),
              [xi, self](Tape& t) {
                const Tensor& dy = t.nodes_[self].grad;
                const Tensor& yv = t.nodes_[self].value;
                Tensor& dx = t.grad_slot(xi);
                for (std::size_t i = 0; i < dx.size(); ++i) {
                  const double s = yv.data()[i];
                  dx.data()[i] += dy.data()[i] * s * (1.0 - s);
                }
              },
              "sigmoid");
}

Var Tape::concat(Var a, Var b) {
  Tensor y = concat_channels(value(a), value(b));
  const int ai = a.id, bi = b.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(y),
              [ai, bi, self](Tape& t) {
                const Tensor& dy = t.nodes_[self].grad;
                Tensor& da = t.grad_slot(ai);
                Tensor& db = t.grad_slot(bi);
                const Shape sa = da.shape(), sb = db.shape();
                for (int n = 0; n < sa.n; ++n) {
                  const double* src = dy.plane(n, 0);
                  double* pa = da.plane(n, 0);
                  for (std::size_t i = 0; i < sa.c * sa.plane(); ++i) pa[i] += src[i];
                  src = dy.plane(n, sa.c);
                  double* pb = db.plane(n, 0);
                  for (std::size_t i = 0; i < sb.c * sb.plane(); ++i) pb[i] += src[i];
                }
              },
              "concat");
}

Var Tape::bce_loss(Var pred, const Tensor& target) {
  const double loss = nn::bce_loss(value(pred), target);
  const int pi = pred.id;
  int self = static_cast<int>(nodes_.size());
  return push(Tensor({1, 1, 1, 1}, loss),
              [pi, self, target](Tape& t) {
                const double scale = t.nodes_[self].grad.data()[0];
                Tensor g = bce_grad(t.nodes_[pi].value, target);
                Tensor& dp = t.grad_slot(pi);
                for (std::size_t i = 0; i < dp.size(); ++i) dp.data()[i] += scale * g.data()[i];
              },
              "bce_loss");
}

void Tape::backward(Var loss, Gradients& grads) {
  if (!record_) throw Error(ErrorCode::GraphError, "tape was built without recording");
  if (nodes_.empty()) throw Error(ErrorCode::GraphError, "backward before any forward pass");
  if (done_) throw Error(ErrorCode::GraphError, "backward already ran on this tape");
  if (node(loss).value.size() != 1) throw Error(ErrorCode::GraphError, "loss must be a scalar");
  done_ = true;
  sink_ = &grads;
  grad_slot(loss.id).fill(1.0);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.back && !n.grad.empty()) n.back(*this);
  }
  sink_ = nullptr;
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!done_) throw Error(ErrorCode::GraphError, "gradient requested before backward");
  return n.grad;
}

}  // namespace vwseg::nn
