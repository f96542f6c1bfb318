#include "vwseg/layers.hpp"

#include <algorithm>
#include <cmath>

namespace vwseg::nn {

namespace {

constexpr std::size_t kColumnBlock = 128;

// C[M x N] += A[M x K] * B[K x N], row-major. The j loop is innermost and
// contiguous, so it vectorizes without reassociating any sum.
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c) {
  for (std::size_t jb = 0; jb < n; jb += kColumnBlock) {
    const std::size_t jn = std::min(kColumnBlock, n - jb);
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n + jb;
      const double* arow = a + i * k;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        const double* brow = b + kk * n + jb;
        for (std::size_t j = 0; j < jn; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

// Column matrix (C*k*k x H*W) of one image for a same-padded k x k window.
void im2col(const double* img, int channels, int h, int w, int k, double* col) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const double* src = img + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          double* row = dst + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(sy) * w;
          std::fill(row, row + x_lo, 0.0);
          for (int x = x_lo; x < x_hi; ++x) row[x] = srow[x + dx];
          std::fill(row + std::max(x_hi, x_lo), row + w, 0.0);
        }
      }
    }
  }
}

void col2im_acc(const double* col, int channels, int h, int w, int k, double* img) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    double* dst = img + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const double* row = src + static_cast<std::size_t>(y) * w;
          double* drow = dst + static_cast<std::size_t>(sy) * w;
          for (int x = x_lo; x < x_hi; ++x) drow[x + dx] += row[x];
        }
      }
    }
  }
}

void check_conv(const Tensor& x, const LayerParams& p) {
  if (x.shape().c != p.in_channels()) {
    throw Error(ErrorCode::ShapeError, p.name + ": expected " + std::to_string(p.in_channels()) +
                                           " input channels, got " + std::to_string(x.shape().c));
  }
}

}  // namespace

LayerParams make_params(std::string name, int out_ch, int in_ch, int k) {
  LayerParams p;
  p.name = std::move(name);
  p.kernel = Tensor({out_ch, in_ch, k, k});
  p.bias = Tensor({1, out_ch, 1, 1});
  return p;
}

void he_uniform_init(LayerParams& p, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : p.kernel.values()) v = dist(rng);
  p.bias.fill(0.0);
}

ParamGrads zero_grads_like(const LayerParams& p) {
  return {Tensor(p.kernel.shape()), Tensor(p.bias.shape())};
}

Tensor conv2d(const Tensor& x, const LayerParams& p) {
  check_conv(x, p);
  const int k = p.kernel_size();
  if (k % 2 == 0) throw Error(ErrorCode::ShapeError, p.name + ": conv2d needs an odd kernel");
  const auto [n, c, h, w] = x.shape();
  const int o = p.out_channels();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t kdim = static_cast<std::size_t>(c) * k * k;

  Tensor y({n, o, h, w});
  std::vector<double> col(kdim * hw);
  for (int b = 0; b < n; ++b) {
    double* out = y.plane(b, 0);
    for (int oc = 0; oc < o; ++oc) std::fill(out + oc * hw, out + (oc + 1) * hw, p.bias.data()[oc]);
    if (k == 1) {
      gemm_acc(o, hw, kdim, p.kernel.data(), x.plane(b, 0), out);
    } else {
      im2col(x.plane(b, 0), c, h, w, k, col.data());
      gemm_acc(o, hw, kdim, p.kernel.data(), col.data(), out);
    }
  }
  return y;
}

Tensor conv2d_input_grad(const Tensor& dy, const LayerParams& p, int in_h, int in_w) {
  const int k = p.kernel_size();
  const auto [n, o, h, w] = dy.shape();
  if (o != p.out_channels() || h != in_h || w != in_w) {
    throw Error(ErrorCode::ShapeError, p.name + ": gradient shape mismatch");
  }
  const int c = p.in_channels();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t kdim = static_cast<std::size_t>(c) * k * k;

  std::vector<double> wt(kdim * o);
  transpose(o, kdim, p.kernel.data(), wt.data());
  Tensor dx({n, c, h, w});
  std::vector<double> dcol(kdim * hw);
  for (int b = 0; b < n; ++b) {
    if (k == 1) {
      gemm_acc(kdim, hw, o, wt.data(), dy.plane(b, 0), dx.plane(b, 0));
    } else {
      std::fill(dcol.begin(), dcol.end(), 0.0);
      gemm_acc(kdim, hw, o, wt.data(), dy.plane(b, 0), dcol.data());
      col2im_acc(dcol.data(), c, h, w, k, dx.plane(b, 0));
    }
  }
  return dx;
}

void conv2d_param_grad(const Tensor& x, const Tensor& dy, ParamGrads& g, int k) {
  const auto [n, c, h, w] = x.shape();
  const int o = dy.shape().c;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t kdim = static_cast<std::size_t>(c) * k * k;
  if (g.kernel.shape() != Shape{o, c, k, k}) {
    throw Error(ErrorCode::ShapeError, "conv2d_param_grad: kernel gradient shape mismatch");
  }

  std::vector<double> col(kdim * hw), colt(kdim * hw);
  for (int b = 0; b < n; ++b) {
    const double* d = dy.plane(b, 0);
    if (k == 1) {
      transpose(kdim, hw, x.plane(b, 0), colt.data());
    } else {
      im2col(x.plane(b, 0), c, h, w, k, col.data());
      transpose(kdim, hw, col.data(), colt.data());
    }
    gemm_acc(o, kdim, hw, d, colt.data(), g.kernel.data());
    for (int oc = 0; oc < o; ++oc) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += d[oc * hw + i];
      g.bias.data()[oc] += s;
    }
  }
}

PoolResult max_pool2(const Tensor& x) {
  const auto [n, c, h, w] = x.shape();
  if (h % 2 != 0 || w % 2 != 0) {
    throw Error(ErrorCode::ShapeError, "max_pool2 needs even spatial dims, got " + to_string(x.shape()));
  }
  const int oh = h / 2, ow = w / 2;
  PoolResult r{Tensor({n, c, oh, ow}), {}};
  r.argmax.resize(r.out.size());
  std::size_t idx = 0;
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* src = x.plane(b, ch);
      double* dst = r.out.plane(b, ch);
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx, ++idx) {
          const std::uint32_t cand[4] = {
              static_cast<std::uint32_t>((2 * y) * w + 2 * xx),
              static_cast<std::uint32_t>((2 * y) * w + 2 * xx + 1),
              static_cast<std::uint32_t>((2 * y + 1) * w + 2 * xx),
              static_cast<std::uint32_t>((2 * y + 1) * w + 2 * xx + 1),
          };
          std::uint32_t best = cand[0];
          for (int q = 1; q < 4; ++q) {
            if (src[cand[q]] > src[best]) best = cand[q];
          }
          dst[y * ow + xx] = src[best];
          r.argmax[idx] = best;
        }
      }
    }
  }
  return r;
}

Tensor max_pool2_backward(const Tensor& dy, const std::vector<std::uint32_t>& argmax,
                          const Shape& input_shape) {
  if (dy.size() != argmax.size()) throw Error(ErrorCode::ShapeError, "max_pool2_backward: bad argmax");
  Tensor dx(input_shape);
  const std::size_t in_plane = input_shape.plane();
  const std::size_t out_plane = dy.shape().plane();
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const std::size_t plane = i / out_plane;
    dx.data()[plane * in_plane + argmax[i]] += dy.data()[i];
  }
  return dx;
}

namespace {

// Rearranges a (out, in, 2, 2) kernel into a (out*4 x in) matrix whose row
// index is out*4 + dy*2 + dx.
std::vector<double> tconv_matrix(const LayerParams& p) {
  const int o = p.out_channels(), c = p.in_channels();
  std::vector<double> m(static_cast<std::size_t>(o) * 4 * c);
  for (int oc = 0; oc < o; ++oc) {
    for (int ic = 0; ic < c; ++ic) {
      for (int t = 0; t < 4; ++t) {
        m[(static_cast<std::size_t>(oc) * 4 + t) * c + ic] = p.kernel.data()[(oc * c + ic) * 4 + t];
      }
    }
  }
  return m;
}

void check_tconv(const LayerParams& p) {
  if (p.kernel.shape().h != 2 || p.kernel.shape().w != 2) {
    throw Error(ErrorCode::ShapeError, p.name + ": transposed conv needs a 2x2 kernel");
  }
}

}  // namespace

Tensor transposed_conv2(const Tensor& x, const LayerParams& p) {
  check_tconv(p);
  if (x.shape().c != p.in_channels()) {
    throw Error(ErrorCode::ShapeError, p.name + ": channel mismatch in transposed conv");
  }
  const auto [n, c, h, w] = x.shape();
  const int o = p.out_channels();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const auto wm = tconv_matrix(p);
  Tensor y({n, o, 2 * h, 2 * w});
  std::vector<double> cols(static_cast<std::size_t>(o) * 4 * hw);
  for (int b = 0; b < n; ++b) {
    std::fill(cols.begin(), cols.end(), 0.0);
    gemm_acc(static_cast<std::size_t>(o) * 4, hw, c, wm.data(), x.plane(b, 0), cols.data());
    for (int oc = 0; oc < o; ++oc) {
      double* dst = y.plane(b, oc);
      const double bias = p.bias.data()[oc];
      for (int t = 0; t < 4; ++t) {
        const int dy = t / 2, dx = t % 2;
        const double* src = cols.data() + (static_cast<std::size_t>(oc) * 4 + t) * hw;
        for (int yy = 0; yy < h; ++yy) {
          double* drow = dst + static_cast<std::size_t>(2 * yy + dy) * (2 * w) + dx;
          const double* srow = src + static_cast<std::size_t>(yy) * w;
          for (int xx = 0; xx < w; ++xx) drow[2 * xx] = srow[xx] + bias;
        }
      }
    }
  }
  return y;
}

namespace {

// Gathers a (out, 2h, 2w) plane stack into the (out*4 x h*w) layout.
void gather_blocks(const double* z, int o, int h, int w, double* cols) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int oc = 0; oc < o; ++oc) {
    const double* src = z + static_cast<std::size_t>(oc) * 4 * hw;
    for (int t = 0; t < 4; ++t) {
      const int dy = t / 2, dx = t % 2;
      double* dst = cols + (static_cast<std::size_t>(oc) * 4 + t) * hw;
      for (int yy = 0; yy < h; ++yy) {
        const double* srow = src + static_cast<std::size_t>(2 * yy + dy) * (2 * w) + dx;
        for (int xx = 0; xx < w; ++xx) dst[yy * w + xx] = srow[2 * xx];
      }
    }
  }
}

}  // namespace

Tensor strided_conv2(const Tensor& z, const LayerParams& p) {
  check_tconv(p);
  const auto [n, o, h2, w2] = z.shape();
  if (o != p.out_channels() || h2 % 2 != 0 || w2 % 2 != 0) {
    throw Error(ErrorCode::ShapeError, p.name + ": strided conv shape mismatch");
  }
  const int h = h2 / 2, w = w2 / 2, c = p.in_channels();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const auto wm = tconv_matrix(p);
  std::vector<double> wt(wm.size());
  transpose(static_cast<std::size_t>(o) * 4, c, wm.data(), wt.data());
  Tensor x({n, c, h, w});
  std::vector<double> cols(static_cast<std::size_t>(o) * 4 * hw);
  for (int b = 0; b < n; ++b) {
    gather_blocks(z.plane(b, 0), o, h, w, cols.data());
    gemm_acc(c, hw, static_cast<std::size_t>(o) * 4, wt.data(), cols.data(), x.plane(b, 0));
  }
  return x;
}

void transposed_conv2_param_grad(const Tensor& x, const Tensor& dy, ParamGrads& g) {
  const auto [n, c, h, w] = x.shape();
  const int o = dy.shape().c;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<double> cols(static_cast<std::size_t>(o) * 4 * hw), xt(hw * c);
  std::vector<double> gm(static_cast<std::size_t>(o) * 4 * c, 0.0);
  for (int b = 0; b < n; ++b) {
    gather_blocks(dy.plane(b, 0), o, h, w, cols.data());
    transpose(c, hw, x.plane(b, 0), xt.data());
    gemm_acc(static_cast<std::size_t>(o) * 4, c, hw, cols.data(), xt.data(), gm.data());
    for (int oc = 0; oc < o; ++oc) {
      const double* d = dy.plane(b, oc);
      double s = 0.0;
      for (std::size_t i = 0; i < 4 * hw; ++i) s += d[i];
      g.bias.data()[oc] += s;
    }
  }
  for (int oc = 0; oc < o; ++oc) {
    for (int ic = 0; ic < c; ++ic) {
      for (int t = 0; t < 4; ++t) {
        g.kernel.data()[(oc * c + ic) * 4 + t] += gm[(static_cast<std::size_t>(oc) * 4 + t) * c + ic];
      }
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  return y;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    if (v >= 0.0) {
      y.data()[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y.data()[i] = e / (1.0 + e);
    }
  }
  return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw Error(ErrorCode::ShapeError, "concat: " + to_string(sa) + " vs " + to_string(sb));
  }
  Tensor y({sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    std::copy(a.plane(n, 0), a.plane(n, 0) + sa.c * sa.plane(), y.plane(n, 0));
    std::copy(b.plane(n, 0), b.plane(n, 0) + sb.c * sb.plane(), y.plane(n, sa.c));
  }
  return y;
}

double bce_loss(const Tensor& pred, const Tensor& target) {
  if (!(pred.shape() == target.shape())) {
    throw Error(ErrorCode::ShapeError, "bce: " + to_string(pred.shape()) + " vs " +
                                           to_string(target.shape()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred.data()[i], kBceEpsilon, 1.0 - kBceEpsilon);
    const double t = target.data()[i];
    sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(pred.size());
}

Tensor bce_grad(const Tensor& pred, const Tensor& target) {
  if (!(pred.shape() == target.shape())) throw Error(ErrorCode::ShapeError, "bce: shape mismatch");
  Tensor g(pred.shape());
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred.data()[i];
    if (p < kBceEpsilon || p > 1.0 - kBceEpsilon) continue;
    const double t = target.data()[i];
    g.data()[i] = (p - t) / (p * (1.0 - p)) * inv_n;
  }
  return g;
}

}  // namespace vwseg::nn
