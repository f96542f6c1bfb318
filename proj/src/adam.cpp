#include "vwseg/adam.hpp"

#include <cmath>

namespace vwseg::nn {

namespace {

void update(Tensor& theta, const Tensor& grad, Tensor& m, Tensor& v, double lr_t,
            const AdamOptions& opt, double bc2) {
  if (m.empty()) m = Tensor(theta.shape());
  if (v.empty()) v = Tensor(theta.shape());
  if (!(grad.shape() == theta.shape())) {
    throw Error(ErrorCode::ShapeError, "adam: gradient shape does not match parameter");
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad.data()[i];
    double& mi = m.data()[i];
    double& vi = v.data()[i];
    mi = opt.beta1 * mi + (1.0 - opt.beta1) * g;
    vi = opt.beta2 * vi + (1.0 - opt.beta2) * g * g;
    theta.data()[i] -= lr_t * mi / (std::sqrt(vi / bc2) + opt.eps);
  }
}

}  // namespace

void adam_step(LayerParams& p, const ParamGrads& g, const AdamOptions& opt) {
  auto& s = p.adam;
  ++s.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(s.step));
  // theta -= lr * (m / bc1) / (sqrt(v / bc2) + eps)
  const double lr_t = opt.lr / bc1;
  update(p.kernel, g.kernel, s.m_kernel, s.v_kernel, lr_t, opt, bc2);
  update(p.bias, g.bias, s.m_bias, s.v_bias, lr_t, opt, bc2);
}

}  // namespace vwseg::nn
