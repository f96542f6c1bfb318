#pragma once

#include "vwseg/layers.hpp"

namespace vwseg::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of kernel and bias; increments the step
/// count even for an all-zero gradient.
void adam_step(LayerParams& p, const ParamGrads& g, const AdamOptions& opt = {});

}  // namespace vwseg::nn
