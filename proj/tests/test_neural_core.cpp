#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

#include "temp_dir.hpp"
#include "vwseg/adam.hpp"
#include "vwseg/tape.hpp"
#include "vwseg/weights_io.hpp"

using namespace vwseg;
using namespace vwseg::nn;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(s);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

LayerParams random_params(const std::string& name, int out, int in, int k, std::mt19937_64& rng) {
  LayerParams p = make_params(name, out, in, k);
  p.kernel = random_tensor(p.kernel.shape(), rng);
  p.bias = random_tensor(p.bias.shape(), rng);
  return p;
}

// Direct-summation convolution with zero padding.
Tensor conv_oracle(const Tensor& x, const LayerParams& p) {
  const Shape s = x.shape();
  const int k = p.kernel_size(), r = k / 2, oc = p.out_channels();
  Tensor y({s.n, oc, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int o = 0; o < oc; ++o)
      for (int yy = 0; yy < s.h; ++yy)
        for (int xx = 0; xx < s.w; ++xx) {
          double acc = p.bias.at(0, o, 0, 0);
          for (int c = 0; c < s.c; ++c)
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx) {
                const int iy = yy + dy - r, ix = xx + dx - r;
                if (iy < 0 || ix < 0 || iy >= s.h || ix >= s.w) continue;
                acc += p.kernel.at(o, c, dy, dx) * x.at(n, c, iy, ix);
              }
          y.at(n, o, yy, xx) = acc;
        }
  return y;
}

// Scatter-add of every input pixel through the 2x2 kernel.
Tensor tconv_oracle(const Tensor& x, const LayerParams& p) {
  const Shape s = x.shape();
  const int oc = p.out_channels();
  Tensor y({s.n, oc, 2 * s.h, 2 * s.w});
  for (int n = 0; n < s.n; ++n)
    for (int o = 0; o < oc; ++o)
      for (int yy = 0; yy < 2 * s.h; ++yy)
        for (int xx = 0; xx < 2 * s.w; ++xx) y.at(n, o, yy, xx) = p.bias.at(0, o, 0, 0);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int iy = 0; iy < s.h; ++iy)
        for (int ix = 0; ix < s.w; ++ix)
          for (int o = 0; o < oc; ++o)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                y.at(n, o, 2 * iy + dy, 2 * ix + dx) += p.kernel.at(o, c, dy, dx) * x.at(n, c, iy, ix);
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

// Checks every entry of `param` against central differences of `loss`.
void check_fd(Tensor& param, const Tensor& analytic, const std::function<double()>& loss,
              double eps = 1e-3, double tol = 1e-3) {
  REQUIRE(param.shape() == analytic.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param.data()[i];
    param.data()[i] = saved + eps;
    const double lp = loss();
    param.data()[i] = saved - eps;
    const double lm = loss();
    param.data()[i] = saved;
    const double num = (lp - lm) / (2 * eps);
    CHECK_MESSAGE(rel_err(analytic.data()[i], num) <= tol,
                  "entry " << i << " analytic " << analytic.data()[i] << " numeric " << num);
  }
}

Tensor binary_target(Shape s, std::mt19937_64& rng) {
  Tensor t(s);
  for (auto& v : t.values()) v = static_cast<double>(rng() & 1u);
  return t;
}

}  // namespace

TEST_CASE("tensor construction validates shape") {
  CHECK_THROWS_AS(Tensor(Shape{1, 0, 2, 2}), Error);
  CHECK_THROWS_AS(Tensor(Shape{1, 1, 2, 2}, std::vector<double>(3)), Error);
  Tensor t({1, 2, 2, 3}, 1.5);
  CHECK(t.size() == 12);
  CHECK(t.at(0, 1, 1, 2) == 1.5);
  t.at(0, 1, 1, 2) = std::nan("");
  CHECK_FALSE(t.all_finite());
  try {
    require_finite(t, "probe");
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
  }
}

TEST_CASE("conv2d examples") {
  LayerParams p = make_params("c", 1, 1, 3);
  p.kernel.at(0, 0, 1, 1) = 1.0;
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({1, 1, 5, 5}, rng);
  CHECK(conv2d(x, p) == x);

  p.kernel.fill(1.0);
  Tensor ones({1, 1, 5, 5}, 1.0);
  Tensor y = conv2d(ones, p);
  CHECK(y.at(0, 0, 2, 2) == 9.0);
  CHECK(y.at(0, 0, 0, 2) == 6.0);
  CHECK(y.at(0, 0, 2, 4) == 6.0);
  CHECK(y.at(0, 0, 0, 0) == 4.0);
  CHECK(y.at(0, 0, 4, 4) == 4.0);

  p.kernel.fill(0.0);
  p.bias.fill(-2.5);
  Tensor z = conv2d(x, p);
  for (double v : z.values()) CHECK(v == -2.5);
}

TEST_CASE("conv2d matches direct summation") {
  std::mt19937_64 rng(7);
  for (int k : {1, 3, 5}) {
    for (auto [c, o, h, w] : {std::array{1, 1, 4, 4}, {3, 2, 5, 7}, {4, 5, 8, 6}}) {
      LayerParams p = random_params("c", o, c, k, rng);
      Tensor x = random_tensor({2, c, h, w}, rng);
      CHECK(max_abs_diff(conv2d(x, p), conv_oracle(x, p)) < 1e-12);
    }
  }
  // Wide planes cross the column blocking boundary.
  LayerParams p = random_params("c", 3, 2, 3, rng);
  Tensor x = random_tensor({1, 2, 13, 23}, rng);
  CHECK(max_abs_diff(conv2d(x, p), conv_oracle(x, p)) < 1e-12);
}

TEST_CASE("conv2d rejects bad geometry") {
  LayerParams p = make_params("c", 2, 3, 3);
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 4, 4}), p), Error);
  LayerParams even = make_params("e", 1, 1, 2);
  CHECK_THROWS_AS(conv2d(Tensor({1, 1, 4, 4}), even), Error);
}

TEST_CASE("max_pool2 examples") {
  Tensor x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  auto r = max_pool2(x);
  CHECK(r.out.shape() == Shape{1, 1, 1, 1});
  CHECK(r.out.data()[0] == 4.0);
  CHECK(r.argmax[0] == 3);

  auto c = max_pool2(Tensor({1, 2, 4, 4}, 7.0));
  for (double v : c.out.values()) CHECK(v == 7.0);
  CHECK(c.argmax == std::vector<std::uint32_t>{0, 2, 8, 10, 0, 2, 8, 10});

  CHECK(max_pool2(Tensor({1, 1, 160, 160})).out.shape() == Shape{1, 1, 80, 80});
  CHECK_THROWS_AS(max_pool2(Tensor({1, 1, 5, 4})), Error);
  CHECK_THROWS_AS(max_pool2(Tensor({1, 1, 4, 3})), Error);
}

TEST_CASE("max_pool2 backward routes gradient to the argmax") {
  Tensor x({1, 1, 2, 4}, std::vector<double>{0, 5, 1, 1, 2, 3, 1, 1});
  auto r = max_pool2(x);
  Tensor dy({1, 1, 1, 2}, std::vector<double>{10, 20});
  Tensor dx = max_pool2_backward(dy, r.argmax, x.shape());
  CHECK(dx == Tensor({1, 1, 2, 4}, std::vector<double>{0, 10, 20, 0, 0, 0, 0, 0}));
}

TEST_CASE("transposed_conv2 examples") {
  LayerParams p = make_params("t", 1, 1, 2);
  p.kernel.fill(1.0);
  Tensor y = transposed_conv2(Tensor({1, 1, 1, 1}, 3.25), p);
  CHECK(y == Tensor({1, 1, 2, 2}, 3.25));

  LayerParams q = make_params("t", 2, 3, 2);
  CHECK(transposed_conv2(Tensor({1, 3, 80, 80}), q).shape() == Shape{1, 2, 160, 160});
  CHECK_THROWS_AS(transposed_conv2(Tensor({1, 2, 4, 4}), q), Error);
}

TEST_CASE("transposed_conv2 matches scatter oracle and is linear") {
  std::mt19937_64 rng(11);
  for (auto [c, o, h, w] : {std::array{1, 1, 1, 1}, {3, 2, 4, 5}, {8, 4, 6, 6}}) {
    LayerParams p = random_params("t", o, c, 2, rng);
    Tensor x = random_tensor({2, c, h, w}, rng);
    CHECK(max_abs_diff(transposed_conv2(x, p), tconv_oracle(x, p)) < 1e-12);

    p.bias.fill(0.0);
    const double a = -1.75;
    Tensor ax = x;
    for (auto& v : ax.values()) v *= a;
    Tensor lhs = transposed_conv2(ax, p);
    Tensor rhs = transposed_conv2(x, p);
    for (auto& v : rhs.values()) v *= a;
    CHECK(max_abs_diff(lhs, rhs) < 1e-12);
  }
}

TEST_CASE("adjoint identities") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const int c = 1 + static_cast<int>(rng() % 4), o = 1 + static_cast<int>(rng() % 4);
    const int h = 1 + static_cast<int>(rng() % 9), w = 1 + static_cast<int>(rng() % 9);

    LayerParams p = random_params("c", o, c, 3, rng);
    p.bias.fill(0.0);
    Tensor x = random_tensor({1, c, h, w}, rng);
    Tensor y = random_tensor({1, o, h, w}, rng);
    const double lhs = dot(conv2d(x, p), y);
    const double rhs = dot(x, conv2d_input_grad(y, p, h, w));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));

    LayerParams t = random_params("t", o, c, 2, rng);
    t.bias.fill(0.0);
    Tensor z = random_tensor({1, o, 2 * h, 2 * w}, rng);
    const double tl = dot(transposed_conv2(x, t), z);
    const double tr = dot(x, strided_conv2(z, t));
    CHECK(std::abs(tl - tr) <= 1e-10 * (1.0 + std::abs(tl)));
  }
}

TEST_CASE("bce examples") {
  std::mt19937_64 rng(3);
  Tensor half({1, 3, 4, 4}, 0.5);
  CHECK(std::abs(bce_loss(half, binary_target(half.shape(), rng)) - std::log(2.0)) < 1e-12);

  Tensor t = binary_target({1, 1, 6, 6}, rng);
  CHECK(bce_loss(t, t) <= 1e-6);
  Tensor g = bce_grad(t, t);
  for (double v : g.values()) CHECK(v == 0.0);

  CHECK(std::abs(bce_loss(Tensor({1, 1, 1, 1}, 0.9), Tensor({1, 1, 1, 1}, 1.0)) - 0.105361) < 1e-6);
  CHECK_THROWS_AS(bce_loss(Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 1})), Error);
}

TEST_CASE("sigmoid is stable at extremes") {
  Tensor x({1, 1, 1, 3}, std::vector<double>{-800, 0, 800});
  Tensor s = sigmoid(x);
  CHECK(s.all_finite());
  CHECK(s.data()[0] == 0.0);
  CHECK(s.data()[1] == 0.5);
  CHECK(s.data()[2] == 1.0);
}

TEST_CASE("backward: single conv + sigmoid + BCE matches finite differences") {
  std::mt19937_64 rng(21);
  LayerParams p = random_params("c", 2, 1, 3, rng);
  Tensor x = random_tensor({1, 1, 4, 4}, rng);
  Tensor target = binary_target({1, 2, 4, 4}, rng);
  auto loss = [&] {
    Tape t(false);
    return t.scalar(t.bce_loss(t.sigmoid(t.conv2d(t.input(x), p)), target));
  };
  Tape tape;
  Var in = tape.input(x);
  Var l = tape.bce_loss(tape.sigmoid(tape.conv2d(in, p)), target);
  Gradients g;
  tape.backward(l, g);
  const ParamGrads* pg = g.find(p);
  REQUIRE(pg != nullptr);
  check_fd(p.kernel, pg->kernel, loss);
  check_fd(p.bias, pg->bias, loss);
  check_fd(x, tape.grad(in), loss);
}

TEST_CASE("backward: every layer type matches finite differences") {
  std::mt19937_64 rng(22);
  LayerParams c0 = random_params("c0", 3, 2, 3, rng);
  LayerParams c1 = random_params("c1", 4, 3, 3, rng);
  LayerParams up = random_params("up", 3, 4, 2, rng);
  LayerParams c2 = random_params("c2", 2, 6, 3, rng);
  LayerParams head = random_params("head", 2, 2, 1, rng);
  Tensor x = random_tensor({1, 2, 4, 4}, rng);
  Tensor target = binary_target({1, 2, 4, 4}, rng);

  auto build = [&](Tape& t, Var in) {
    Var a = t.relu(t.conv2d(in, c0));
    Var b = t.relu(t.conv2d(t.max_pool2(a), c1));
    Var u = t.transposed_conv2(b, up);
    Var m = t.relu(t.conv2d(t.concat(a, u), c2));
    return t.bce_loss(t.sigmoid(t.conv2d(m, head)), target);
  };
  auto loss = [&] {
    Tape t(false);
    return t.scalar(build(t, t.input(x)));
  };
  Tape tape;
  Var in = tape.input(x);
  Gradients g;
  tape.backward(build(tape, in), g);
  for (LayerParams* p : {&c0, &c1, &up, &c2, &head}) {
    CAPTURE(p->name);
    const ParamGrads* pg = g.find(*p);
    REQUIRE(pg != nullptr);
    check_fd(p->kernel, pg->kernel, loss);
    check_fd(p->bias, pg->bias, loss);
  }
  check_fd(x, tape.grad(in), loss);
}

TEST_CASE("backward: linear layer matches closed form") {
  // L = mean(-t ln s(z) - (1-t) ln(1-s(z))), z = w*x + b with a 1x1 kernel:
  // dL/dw = mean((s(z) - t) x), dL/db = mean(s(z) - t).
  std::mt19937_64 rng(5);
  LayerParams p = random_params("lin", 1, 1, 1, rng);
  Tensor x = random_tensor({1, 1, 3, 3}, rng);
  Tensor target = binary_target(x.shape(), rng);
  Tape tape;
  Gradients g;
  tape.backward(tape.bce_loss(tape.sigmoid(tape.conv2d(tape.input(x), p)), target), g);
  double dw = 0.0, db = 0.0;
  const double w = p.kernel.data()[0], b = p.bias.data()[0];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-(w * x.data()[i] + b)));
    dw += (s - target.data()[i]) * x.data()[i];
    db += s - target.data()[i];
  }
  dw /= static_cast<double>(x.size());
  db /= static_cast<double>(x.size());
  CHECK(std::abs(g.find(p)->kernel.data()[0] - dw) < 1e-12);
  CHECK(std::abs(g.find(p)->bias.data()[0] - db) < 1e-12);
}

TEST_CASE("backward: saturated perfect prediction has near-zero gradient") {
  LayerParams p = make_params("c", 1, 1, 1);
  p.kernel.fill(1.0);
  Tensor x({1, 1, 2, 2}, std::vector<double>{60, -60, 60, -60});
  Tensor target({1, 1, 2, 2}, std::vector<double>{1, 0, 1, 0});
  Tape tape;
  Gradients g;
  tape.backward(tape.bce_loss(tape.sigmoid(tape.conv2d(tape.input(x), p)), target), g);
  for (double v : g.find(p)->kernel.values()) CHECK(std::abs(v) < 1e-12);
  for (double v : g.find(p)->bias.values()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("backward error cases") {
  Gradients g;
  Tape empty;
  CHECK_THROWS_AS(empty.backward(Var{0}, g), Error);

  Tape t;
  Var x = t.input(Tensor({1, 1, 2, 2}, 0.3));
  CHECK_THROWS_AS(t.grad(x), Error);
  CHECK_THROWS_AS(t.backward(x, g), Error);
  Var l = t.bce_loss(x, Tensor({1, 1, 2, 2}, 1.0));
  t.backward(l, g);
  try {
    t.backward(l, g);
    FAIL("expected GraphError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GraphError);
  }

  Tape eval(false);
  Var y = eval.bce_loss(eval.input(Tensor({1, 1, 1, 1}, 0.5)), Tensor({1, 1, 1, 1}, 1.0));
  CHECK_THROWS_AS(eval.backward(y, g), Error);
  CHECK_THROWS_AS(eval.value(Var{99}), Error);
}

TEST_CASE("forward ops do not mutate inputs") {
  std::mt19937_64 rng(9);
  LayerParams p = random_params("c", 2, 2, 3, rng);
  LayerParams t = random_params("t", 2, 2, 2, rng);
  const LayerParams p0 = p, t0 = t;
  Tensor x = random_tensor({1, 2, 4, 4}, rng);
  const Tensor x0 = x;
  Tensor a = conv2d(x, p), b = conv2d(x, p);
  CHECK(a == b);
  (void)transposed_conv2(x, t);
  (void)max_pool2(x);
  (void)relu(x);
  (void)sigmoid(x);
  CHECK(x == x0);
  CHECK(p.kernel == p0.kernel);
  CHECK(t.kernel == t0.kernel);
}

TEST_CASE("tape regime lists relu flags then pooling argmax") {
  Tensor x({1, 1, 2, 4});
  const double v[] = {-1, 2, 3, 0.5, 4, -2, 1, 5};
  std::copy(std::begin(v), std::end(v), x.values().begin());
  Tape quiet(false);
  (void)quiet.max_pool2(quiet.relu(quiet.input(x)));
  CHECK(quiet.regime().empty());
  Tape t(false);
  t.track_regime(true);
  (void)t.max_pool2(t.relu(t.input(x)));
  CHECK(t.regime() == std::vector<std::uint32_t>{0, 1, 1, 1, 1, 0, 1, 1, 4, 7});
}

TEST_CASE("adam first step moves by lr against the gradient sign") {
  LayerParams p = make_params("p", 2, 1, 1);
  p.kernel = Tensor({2, 1, 1, 1}, std::vector<double>{1.0, -2.0});
  ParamGrads g{Tensor({2, 1, 1, 1}, std::vector<double>{0.3, -4.0}), Tensor({1, 2, 1, 1}, 0.0)};
  AdamOptions opt;
  adam_step(p, g, opt);
  CHECK(p.adam.step == 1);
  CHECK(std::abs(p.kernel.data()[0] - (1.0 - opt.lr)) < 1e-10);
  CHECK(std::abs(p.kernel.data()[1] - (-2.0 + opt.lr)) < 1e-10);
  CHECK(p.bias.data()[0] == 0.0);
}

TEST_CASE("adam zero gradient leaves parameters and increments step") {
  std::mt19937_64 rng(2);
  LayerParams p = random_params("p", 2, 2, 3, rng);
  const Tensor k0 = p.kernel, b0 = p.bias;
  adam_step(p, zero_grads_like(p));
  adam_step(p, zero_grads_like(p));
  CHECK(p.kernel == k0);
  CHECK(p.bias == b0);
  CHECK(p.adam.step == 2);
}

TEST_CASE("adam matches a scalar recurrence") {
  LayerParams p = make_params("p", 1, 1, 1);
  p.kernel.fill(0.5);
  AdamOptions opt{1e-2, 0.9, 0.999, 1e-8};
  const double g = 0.7;
  double theta = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    adam_step(p, {Tensor({1, 1, 1, 1}, g), Tensor({1, 1, 1, 1}, 0.0)}, opt);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    theta -= opt.lr * mh / (std::sqrt(vh) + opt.eps);
    CHECK(std::abs(p.kernel.data()[0] - theta) < 1e-12);
  }
  CHECK_THROWS_AS(adam_step(p, {Tensor({1, 1, 2, 1}), Tensor({1, 1, 1, 1})}, opt), Error);
}

TEST_CASE("he_uniform_init respects the bound and is seeded") {
  LayerParams a = make_params("a", 16, 8, 3), b = make_params("b", 16, 8, 3);
  std::mt19937_64 r1(42), r2(42);
  he_uniform_init(a, 72, r1);
  he_uniform_init(b, 72, r2);
  CHECK(a.kernel == b.kernel);
  const double bound = std::sqrt(6.0 / 72.0);
  double mx = 0.0;
  for (double v : a.kernel.values()) mx = std::max(mx, std::abs(v));
  CHECK(mx <= bound);
  CHECK(mx > 0.9 * bound);
  for (double v : a.bias.values()) CHECK(v == 0.0);
}

TEST_CASE("weights round trip with and without Adam state") {
  std::mt19937_64 rng(4);
  LayerParams a = random_params("a", 3, 2, 3, rng), b = random_params("b", 2, 3, 2, rng);
  adam_step(a, {random_tensor(a.kernel.shape(), rng), random_tensor(a.bias.shape(), rng)});
  TempDir dir;
  const auto bin = dir.path / "w.bin";
  const auto man = dir.path / "w.json";
  std::vector<const LayerParams*> src{&a, &b};

  for (bool adam : {false, true}) {
    save_weights(src, bin, man, adam);
    LayerParams a2 = make_params("a", 3, 2, 3), b2 = make_params("b", 2, 3, 2);
    std::vector<LayerParams*> dst{&a2, &b2};
    load_weights(dst, bin, man);
    CHECK(a2.kernel == a.kernel);
    CHECK(a2.bias == a.bias);
    CHECK(b2.kernel == b.kernel);
    if (adam) {
      CHECK(a2.adam == a.adam);
      CHECK(b2.adam.step == 0);
    } else {
      CHECK(a2.adam.step == 0);
      CHECK(a2.adam.m_kernel.empty());
    }
    CHECK(std::filesystem::file_size(bin) ==
          8 * (a.parameter_count() + b.parameter_count()) * (adam ? 3 : 1));
  }

  LayerParams wrong = make_params("a", 4, 2, 3), b3 = make_params("b", 2, 3, 2);
  std::vector<LayerParams*> bad{&wrong, &b3};
  CHECK_THROWS_AS(load_weights(bad, bin, man), Error);
  std::filesystem::resize_file(bin, 16);
  LayerParams a4 = make_params("a", 3, 2, 3), b4 = make_params("b", 2, 3, 2);
  std::vector<LayerParams*> dst{&a4, &b4};
  CHECK_THROWS_AS(load_weights(dst, bin, man), Error);
}
