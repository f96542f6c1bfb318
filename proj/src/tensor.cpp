#include "vwseg/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace vwseg::nn {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
    throw Error(ErrorCode::ShapeError, "tensor extents must be positive: " + to_string(shape));
  }
  data_.assign(shape.count(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : Tensor(shape) {
  if (values.size() != shape.count()) {
    throw Error(ErrorCode::ShapeError, "value count does not match " + to_string(shape));
  }
  data_ = std::move(values);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) {
    throw Error(ErrorCode::NonFinite, std::string("non-finite value in ") + where);
  }
}

double dot(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) throw Error(ErrorCode::ShapeError, "dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

}  // namespace vwseg::nn
