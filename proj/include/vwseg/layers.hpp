#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vwseg/tensor.hpp"

namespace vwseg::nn {

struct AdamState {
  Tensor m_kernel;
  Tensor v_kernel;
  Tensor m_bias;
  Tensor v_bias;
  long step = 0;

  bool operator==(const AdamState&) const = default;
};

/// Kernel stored as (out, in, kh, kw); bias as (1, out, 1, 1).
struct LayerParams {
  std::string name;
  Tensor kernel;
  Tensor bias;
  AdamState adam;

  int out_channels() const { return kernel.shape().n; }
  int in_channels() const { return kernel.shape().c; }
  int kernel_size() const { return kernel.shape().h; }
  std::size_t parameter_count() const { return kernel.size() + bias.size(); }
};

struct ParamGrads {
  Tensor kernel;
  Tensor bias;
};

/// Zero kernel and bias of the given geometry, Adam state cleared.
LayerParams make_params(std::string name, int out_ch, int in_ch, int k);

/// He-uniform kernel (bound sqrt(6 / fan_in)), zero bias.
void he_uniform_init(LayerParams& p, int fan_in, std::mt19937_64& rng);

ParamGrads zero_grads_like(const LayerParams& p);

// Raw kernels. Every function is pure; outputs are freshly allocated.

/// Cross-correlation with odd square kernel, stride 1, zero padding k/2.
Tensor conv2d(const Tensor& x, const LayerParams& p);

/// Adjoint of conv2d's linear part: the gradient with respect to its input.
Tensor conv2d_input_grad(const Tensor& dy, const LayerParams& p, int in_h, int in_w);

/// Accumulates kernel/bias gradients of conv2d into `g`.
void conv2d_param_grad(const Tensor& x, const Tensor& dy, ParamGrads& g, int k);

struct PoolResult {
  Tensor out;
  /// Flat index inside each input plane of the selected element.
  std::vector<std::uint32_t> argmax;
};

/// 2x2 window, stride 2; ties resolve to the first element in row-major order.
PoolResult max_pool2(const Tensor& x);
Tensor max_pool2_backward(const Tensor& dy, const std::vector<std::uint32_t>& argmax,
                          const Shape& input_shape);

/// 2x2 stride-2 transposed convolution with kernel (out, in, 2, 2): every
/// input pixel scatters a 2x2 block into the output.
Tensor transposed_conv2(const Tensor& x, const LayerParams& p);

/// Stride-2 2x2 convolution with the same kernel: the adjoint of
/// transposed_conv2 (without bias) and its input gradient.
Tensor strided_conv2(const Tensor& z, const LayerParams& p);

void transposed_conv2_param_grad(const Tensor& x, const Tensor& dy, ParamGrads& g);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);

inline constexpr double kBceEpsilon = 1e-7;

/// Mean over all elements of -[t ln p + (1-t) ln(1-p)], p clamped to
/// [eps, 1-eps].
double bce_loss(const Tensor& pred, const Tensor& target);

/// d(bce)/d(pred); zero where the clamp is active.
Tensor bce_grad(const Tensor& pred, const Tensor& target);

}  // namespace vwseg::nn
