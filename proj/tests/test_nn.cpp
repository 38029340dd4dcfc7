// Layer forward/backward checks against central finite differences.
#include <cmath>
#include <random>

#include "doctest.h"
#include "vidup/errors.hpp"
#include "vidup/nn/layers.hpp"

using namespace vidup;
using namespace vidup::nn;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  for (float& v : t.values()) v = d(rng);
  return t;
}

// Projection loss L = sum(y * r); computed in double.
double project(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * r[i];
  return s;
}

struct GradCheck {
  double worst_input = 0.0;
  double worst_param = 0.0;
};

double rel_err(double a, double b) { return std::fabs(a - b) / std::max(1e-3, std::fabs(a) + std::fabs(b)); }

GradCheck check_layer(Layer& layer, const Tensor& x, Mode mode, float h = 1e-2f, int probes = 12) {
  LayerCache cache;
  const Tensor y = layer.forward(x, mode, &cache);
  const Tensor r = random_tensor(y.shape(), 99);
  std::vector<Tensor> grads;
  for (Param* p : layer.params()) grads.emplace_back(p->value.shape());
  const Tensor dx = layer.backward(r, cache, grads, true);
  REQUIRE(dx.shape() == x.shape());

  GradCheck out;
  std::mt19937_64 rng(5);
  for (int i = 0; i < probes; ++i) {
    const std::size_t at = rng() % x.size();
    Tensor xp = x, xm = x;
    xp[at] += h;
    xm[at] -= h;
    const double fd = (project(layer.forward(xp, mode, nullptr), r) - project(layer.forward(xm, mode, nullptr), r)) /
                      (2.0 * h);
    out.worst_input = std::max(out.worst_input, rel_err(fd, dx[at]));
  }
  auto params = layer.params();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& value = params[pi]->value;
    for (int i = 0; i < probes; ++i) {
      const std::size_t at = rng() % value.size();
      const float saved = value[at];
      value[at] = saved + h;
      const double fp = project(layer.forward(x, mode, nullptr), r);
      value[at] = saved - h;
      const double fm = project(layer.forward(x, mode, nullptr), r);
      value[at] = saved;
      out.worst_param = std::max(out.worst_param, rel_err((fp - fm) / (2.0 * h), grads[pi][at]));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("conv3d gradients match finite differences") {
  std::mt19937_64 rng(1);
  Conv3d conv("c", 3, 4, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, rng);
  const Tensor x = random_tensor({2, 3, 4, 5, 6}, 2);
  const auto r = check_layer(conv, x, Mode::Training);
  CHECK(r.worst_input < 2e-3);
  CHECK(r.worst_param < 2e-3);
}

TEST_CASE("strided conv3d output extent and gradients") {
  std::mt19937_64 rng(1);
  Conv3d conv("c", 2, 3, {3, 3, 3}, {2, 2, 2}, {1, 1, 1}, rng);
  CHECK(conv.output_dims({8, 6, 5}) == Dims3{4, 3, 3});
  const Tensor x = random_tensor({1, 2, 8, 6, 5}, 3);
  const auto r = check_layer(conv, x, Mode::Training);
  CHECK(r.worst_input < 2e-3);
  CHECK(r.worst_param < 2e-3);
}

TEST_CASE("conv3d matches a direct convolution") {
  std::mt19937_64 rng(4);
  Conv3d conv("c", 2, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, rng);
  const Tensor x = random_tensor({1, 2, 3, 4, 5}, 6);
  const Tensor y = conv.forward(x, Mode::Inference, nullptr);
  const Tensor& w = conv.params()[0]->value;
  const Tensor& b = conv.params()[1]->value;
  const int T = 3, H = 4, W = 5;
  for (int co = 0; co < 3; ++co) {
    for (int t = 0; t < T; ++t) {
      for (int hh = 0; hh < H; ++hh) {
        for (int ww = 0; ww < W; ++ww) {
          double s = b[co];
          for (int ci = 0; ci < 2; ++ci) {
            for (int kt = 0; kt < 3; ++kt) {
              for (int kh = 0; kh < 3; ++kh) {
                for (int kw = 0; kw < 3; ++kw) {
                  const int it = t + kt - 1, ih = hh + kh - 1, iw = ww + kw - 1;
                  if (it < 0 || it >= T || ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                  s += w[co * 54 + ci * 27 + kt * 9 + kh * 3 + kw] * x[((ci * T + it) * H + ih) * W + iw];
                }
              }
            }
          }
          CHECK(y[((co * T + t) * H + hh) * W + ww] == doctest::Approx(s).epsilon(1e-5));
        }
      }
    }
  }
}

TEST_CASE("transposed conv3d doubles extent and has correct gradients") {
  std::mt19937_64 rng(7);
  ConvTranspose3d deconv("d", 3, 2, {3, 3, 3}, {2, 2, 2}, {1, 1, 1}, {1, 1, 1}, rng);
  CHECK(deconv.output_dims({2, 3, 4}) == Dims3{4, 6, 8});
  ConvTranspose3d same("s", 3, 2, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng);
  CHECK(same.output_dims({2, 3, 4}) == Dims3{2, 3, 4});
  const Tensor x = random_tensor({2, 3, 2, 3, 2}, 8);
  auto r = check_layer(deconv, x, Mode::Training);
  CHECK(r.worst_input < 2e-3);
  CHECK(r.worst_param < 2e-3);
  r = check_layer(same, x, Mode::Training);
  CHECK(r.worst_input < 2e-3);
  CHECK(r.worst_param < 2e-3);
}

TEST_CASE("transposed conv is the adjoint of the matching conv") {
  // <conv(x), y> == <x, deconv(y)> when both share weights and have no bias.
  std::mt19937_64 rng(9);
  Conv3d conv("c", 2, 3, {3, 3, 3}, {2, 2, 2}, {1, 1, 1}, rng);
  ConvTranspose3d deconv("d", 3, 2, {3, 3, 3}, {2, 2, 2}, {1, 1, 1}, {1, 1, 1}, rng);
  deconv.params()[0]->value = Tensor({3, 2 * 27}, std::vector<float>(conv.params()[0]->value.values().begin(),
                                                                     conv.params()[0]->value.values().end()));
  const Tensor x = random_tensor({1, 2, 4, 4, 4}, 10);
  const Tensor y = random_tensor({1, 3, 2, 2, 2}, 11);
  const double lhs = project(conv.forward(x, Mode::Inference, nullptr), y);
  const double rhs = project(x, deconv.forward(y, Mode::Inference, nullptr));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}

TEST_CASE("maxpool routes gradient to the argmax and rejects indivisible input") {
  MaxPool3d pool({1, 2, 2});
  const Tensor x = random_tensor({1, 2, 2, 4, 4}, 12);
  const auto r = check_layer(pool, x, Mode::Training, 1e-3f);
  CHECK(r.worst_input < 1e-3);
  CHECK_THROWS_AS(pool.forward(random_tensor({1, 1, 2, 3, 4}, 1), Mode::Inference, nullptr), ShapeError);
}

TEST_CASE("batchnorm training-mode gradients and statistics") {
  BatchNorm3d bn("bn", 3);
  bn.params()[0]->value = random_tensor({3}, 13, 0.5f, 1.5f);
  bn.params()[1]->value = random_tensor({3}, 14);
  const Tensor x = random_tensor({2, 3, 2, 3, 3}, 15, -2.0f, 3.0f);
  const auto r = check_layer(bn, x, Mode::Training);
  CHECK(r.worst_input < 5e-3);
  CHECK(r.worst_param < 5e-3);

  LayerCache cache;
  bn.forward(x, Mode::Training, &cache);
  bn.commit_statistics(cache, 1.0f);
  // With factor 1 the running mean equals the batch mean, so inference output matches.
  const Tensor yi = bn.forward(x, Mode::Inference, nullptr);
  const Tensor yt = bn.forward(x, Mode::Training, nullptr);
  double worst = 0.0;
  for (std::size_t i = 0; i < yi.size(); ++i) worst = std::max(worst, std::fabs(double(yi[i]) - yt[i]));
  CHECK(worst < 0.05);
}

TEST_CASE("linear, relu, scaled tanh, broadcast, rescale gradients") {
  std::mt19937_64 rng(16);
  Linear fc("fc", 12, 5, rng);
  auto r = check_layer(fc, random_tensor({3, 12}, 17), Mode::Training);
  CHECK(r.worst_input < 2e-3);
  CHECK(r.worst_param < 2e-3);

  ReLU relu;
  CHECK(check_layer(relu, random_tensor({2, 9}, 18), Mode::Training, 1e-4f).worst_input < 1e-2);

  ScaledTanh th(10.0f);
  CHECK(check_layer(th, random_tensor({2, 9}, 19), Mode::Training, 1e-3f).worst_input < 2e-3);

  Broadcast3d bc({1, 2, 2});
  CHECK(check_layer(bc, random_tensor({2, 4}, 20), Mode::Training).worst_input < 1e-3);

  PixelRescale px(true);
  CHECK(check_layer(px, random_tensor({1, 20}, 21, 1.0f, 254.0f), Mode::Training, 0.25f).worst_input < 1e-3);
}

TEST_CASE("pixel rescale clamps and masks gradient outside the valid range") {
  PixelRescale px(true);
  LayerCache cache;
  const Tensor x({1, 4}, std::vector<float>{-5.0f, 0.0f, 255.0f, 300.0f});
  const Tensor y = px.forward(x, Mode::Training, &cache);
  CHECK(y[0] == -1.0f);
  CHECK(y[1] == -1.0f);
  CHECK(y[2] == 1.0f);
  CHECK(y[3] == 1.0f);
  const Tensor dx = px.backward(Tensor({1, 4}, 1.0f), cache, {}, true);
  CHECK(dx[0] == 0.0f);
  CHECK(dx[1] > 0.0f);
  CHECK(dx[2] > 0.0f);
  CHECK(dx[3] == 0.0f);
  PixelRescale raw(false);
  CHECK(raw.forward(x, Mode::Inference, nullptr)[3] > 1.0f);
}

TEST_CASE("sequential backward chains layers and adam decreases a quadratic") {
  std::mt19937_64 rng(22);
  Sequential net;
  net.add<Linear>("a", 6, 8, rng);
  net.add<ReLU>();
  net.add<Linear>("b", 8, 1, rng);
  const Tensor x = random_tensor({16, 6}, 23);
  Tensor target({16, 1});
  for (int i = 0; i < 16; ++i) target[i] = x[i * 6] - 0.5f * x[i * 6 + 1];

  Adam opt(net.params());
  auto loss_and_grad = [&](std::vector<Tensor>* grads) {
    Tape tape;
    const Tensor y = net.forward(x, Mode::Training, &tape);
    Tensor dy(y.shape());
    double loss = 0.0;
    for (int i = 0; i < 16; ++i) {
      const double d = y[i] - target[i];
      loss += d * d / 16.0;
      dy[i] = static_cast<float>(2.0 * d / 16.0);
    }
    if (grads) net.backward(dy, tape, grads, false);
    return loss;
  };
  const double initial = loss_and_grad(nullptr);
  for (int step = 0; step < 300; ++step) {
    auto grads = net.zero_grads();
    loss_and_grad(&grads);
    opt.step(grads, 0.01f);
  }
  CHECK(loss_and_grad(nullptr) < 0.1 * initial);
  CHECK(opt.steps() == 300);
}

TEST_CASE("softmax rows are normalized and parameter hash tracks values") {
  const Tensor logits({2, 3}, std::vector<float>{1.0f, 2.0f, 3.0f, 1000.0f, 0.0f, -1000.0f});
  const Tensor q = softmax(logits);
  CHECK(q[0] + q[1] + q[2] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(q[3] == doctest::Approx(1.0));
  std::mt19937_64 rng(1);
  Linear fc("fc", 3, 2, rng);
  const Param* ps[] = {fc.params()[0], fc.params()[1]};
  const auto h0 = parameter_hash(ps);
  fc.params()[1]->value[0] += 1.0f;
  CHECK(parameter_hash(ps) != h0);
}
