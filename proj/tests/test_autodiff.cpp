#include <vts/autodiff.hpp>
#include <vts/nn.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "gradcheck.hpp"

using namespace vts;
using ad::Var;
using testing::max_rel_grad_err;
using testing::random_tensor;
using Catch::Approx;

namespace {
constexpr double kTol = 1e-3;
}

TEST_CASE("elementwise chain matches finite differences", "[autodiff]") {
  Rng rng(1);
  auto a = Var<double>::leaf(random_tensor({2, 3, 4}, rng), true);
  auto b = Var<double>::leaf(random_tensor({2, 3, 4}, rng, 0.2, 1.5), true);
  auto build = [&] {
    auto t = ad::mul(ad::vtanh(a), ad::vsigmoid(b));
    auto u = ad::add(ad::scale(t, 0.7), ad::square(ad::sub(a, b)));
    auto v = ad::add_scalar(ad::leaky_relu(u, 0.01), 0.3);
    return ad::mean_all(ad::vabs(v));
  };
  REQUIRE(max_rel_grad_err({a, b}, build) < kTol);
}

TEST_CASE("rsub and mean compose to the expected values", "[autodiff]") {
  auto s = Var<double>::leaf(Tensor<double>({1, 2, 2}, 0.25), true);
  auto loss = ad::mean_all(ad::square(ad::rsub_scalar(1.0, s)));
  REQUIRE(loss.scalar() == Approx(0.5625));
  ad::backward(loss);
  // d/ds mean((1-s)^2) = -2(1-s)/N
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(s.grad()[i] == Approx(-2.0 * 0.75 / 4.0));
}

TEST_CASE("linear layer gradients", "[autodiff]") {
  Rng rng(2);
  auto x = Var<double>::leaf(random_tensor({2, 5, 3}, rng), true);
  auto w = Var<double>::leaf(random_tensor({3, 4}, rng), true);
  auto b = Var<double>::leaf(random_tensor({4}, rng), true);
  auto build = [&] { return ad::mean_all(ad::square(ad::linear(x, w, b))); };
  REQUIRE(max_rel_grad_err({x, w, b}, build) < kTol);
}

TEST_CASE("batched matmuls and softmax (attention core)", "[autodiff]") {
  Rng rng(3);
  auto q = Var<double>::leaf(random_tensor({2, 4, 3}, rng), true);
  auto k = Var<double>::leaf(random_tensor({2, 4, 3}, rng), true);
  auto v = Var<double>::leaf(random_tensor({2, 4, 3}, rng), true);
  auto build = [&] {
    auto att = ad::softmax_lastdim(ad::scale(ad::bmm_nt(q, k), 1.0 / std::sqrt(3.0)));
    return ad::mean_all(ad::square(ad::bmm_nn(att, v)));
  };
  REQUIRE(max_rel_grad_err({q, k, v}, build) < kTol);

  SECTION("softmax rows sum to one") {
    auto att = ad::softmax_lastdim(ad::bmm_nt(q, k));
    for (std::size_t r = 0; r < 8; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += att.value()[r * 4 + j];
      REQUIRE(s == Approx(1.0));
    }
  }
}

TEST_CASE("full self-attention block gradients", "[autodiff]") {
  Rng rng(4);
  nn::AttentionWeights::Of<double> w;
  w.wq = Var<double>::leaf(random_tensor({4, 4}, rng), true);
  w.bq = Var<double>::leaf(random_tensor({4}, rng), true);
  w.wk = Var<double>::leaf(random_tensor({4, 4}, rng), true);
  w.bk = Var<double>::leaf(random_tensor({4}, rng), true);
  w.wv = Var<double>::leaf(random_tensor({4, 4}, rng), true);
  w.bv = Var<double>::leaf(random_tensor({4}, rng), true);
  w.wo = Var<double>::leaf(random_tensor({4, 4}, rng), true);
  w.bo = Var<double>::leaf(random_tensor({4}, rng), true);
  auto x = Var<double>::leaf(random_tensor({2, 5, 4}, rng), true);
  auto build = [&] { return ad::mean_all(ad::square(nn::self_attention(x, w, 2))); };
  REQUIRE(max_rel_grad_err({x, w.wq, w.bq, w.wk, w.bk, w.wv, w.bv, w.wo, w.bo}, build) < kTol);
}

TEST_CASE("conv1d gradients, odd and even kernels", "[autodiff]") {
  Rng rng(5);
  SECTION("odd kernel, same padding") {
    auto x = Var<double>::leaf(random_tensor({2, 7, 3}, rng), true);
    auto w = Var<double>::leaf(random_tensor({5 * 3, 4}, rng), true);
    auto b = Var<double>::leaf(random_tensor({4}, rng), true);
    auto build = [&] { return ad::mean_all(ad::square(nn::conv1d_same(x, w, b, 5))); };
    REQUIRE(max_rel_grad_err({x, w, b}, build) < kTol);
    REQUIRE(nn::conv1d_same(x, w, b, 5).value().dim(1) == 7);
  }
  SECTION("even kernel keeps length with asymmetric padding") {
    auto x = Var<double>::leaf(random_tensor({1, 6, 2}, rng), true);
    auto w = Var<double>::leaf(random_tensor({4 * 2, 3}, rng), true);
    auto b = Var<double>::leaf(random_tensor({3}, rng), true);
    REQUIRE(nn::conv1d_same(x, w, b, 4).value().dim(1) == 6);
    auto build = [&] { return ad::mean_all(ad::square(nn::conv1d_same(x, w, b, 4))); };
    REQUIRE(max_rel_grad_err({x, w, b}, build) < kTol);
  }
}

TEST_CASE("transposed conv1d doubles the length and backpropagates", "[autodiff]") {
  Rng rng(6);
  auto x = Var<double>::leaf(random_tensor({2, 5, 3}, rng), true);
  auto w = Var<double>::leaf(random_tensor({4 * 3, 2}, rng), true);
  auto b = Var<double>::leaf(random_tensor({2}, rng), true);
  auto y = nn::conv_transpose1d(x, w, b, 4, 2, 1);
  REQUIRE(y.value().dim(1) == 10);
  auto build = [&] { return ad::mean_all(ad::square(nn::conv_transpose1d(x, w, b, 4, 2, 1))); };
  REQUIRE(max_rel_grad_err({x, w, b}, build) < kTol);
}

TEST_CASE("conv2d gradients with stride", "[autodiff]") {
  Rng rng(7);
  auto x = Var<double>::leaf(random_tensor({2, 6, 5, 2}, rng), true);
  auto w = Var<double>::leaf(random_tensor({3 * 3 * 2, 4}, rng), true);
  auto b = Var<double>::leaf(random_tensor({4}, rng), true);
  auto y = nn::conv2d(x, w, b, 3, 3, 2, 2, 1, 1);
  REQUIRE(y.value().dim(1) == 3);  // (6+2-3)/2+1
  REQUIRE(y.value().dim(2) == 3);  // (5+2-3)/2+1
  auto build = [&] { return ad::mean_all(ad::square(nn::conv2d(x, w, b, 3, 3, 2, 2, 1, 1))); };
  REQUIRE(max_rel_grad_err({x, w, b}, build) < kTol);
}

TEST_CASE("lstm gradients via BPTT", "[autodiff]") {
  Rng rng(8);
  auto x = Var<double>::leaf(random_tensor({2, 4, 3}, rng), true);
  auto w_ih = Var<double>::leaf(random_tensor({3, 4 * 5}, rng, -0.5, 0.5), true);
  auto w_hh = Var<double>::leaf(random_tensor({5, 4 * 5}, rng, -0.5, 0.5), true);
  auto b = Var<double>::leaf(random_tensor({4 * 5}, rng, -0.2, 0.2), true);
  auto build = [&] { return ad::mean_all(ad::square(nn::lstm_seq(x, w_ih, w_hh, b))); };
  REQUIRE(max_rel_grad_err({x, w_ih, w_hh, b}, build) < kTol);

  SECTION("zero input with zero bias stays zero") {
    auto zx = Var<double>::constant(Tensor<double>({1, 6, 3}, 0.0));
    auto zb = Var<double>::leaf(Tensor<double>({4 * 5}, 0.0), true);
    auto h = nn::lstm_seq(zx, w_ih, w_hh, zb);
    for (std::size_t i = 0; i < h.value().numel(); ++i) REQUIRE(h.value()[i] == Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("normalization gradients", "[autodiff]") {
  Rng rng(9);
  auto x = Var<double>::leaf(random_tensor({2, 5, 6}, rng), true);
  auto g = Var<double>::leaf(random_tensor({6}, rng, 0.5, 1.5), true);
  auto b = Var<double>::leaf(random_tensor({6}, rng, -0.3, 0.3), true);
  SECTION("instance norm (per channel over time)") {
    auto build = [&] { return ad::mean_all(ad::square(ad::instance_norm(x, g, b))); };
    REQUIRE(max_rel_grad_err({x, g, b}, build, 1e-5) < kTol);
  }
  SECTION("group norm") {
    auto build = [&] { return ad::mean_all(ad::square(ad::group_norm(x, g, b, 3))); };
    REQUIRE(max_rel_grad_err({x, g, b}, build, 1e-5) < kTol);
  }
  SECTION("layer norm") {
    auto build = [&] { return ad::mean_all(ad::square(ad::layer_norm(x, g, b))); };
    REQUIRE(max_rel_grad_err({x, g, b}, build, 1e-5) < kTol);
  }
  SECTION("instance norm normalizes each channel") {
    auto y = ad::instance_norm(x, Var<double>::constant(Tensor<double>({6}, 1.0)),
                               Var<double>::constant(Tensor<double>({6}, 0.0)));
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t c = 0; c < 6; ++c) {
        double mean = 0;
        for (std::size_t t = 0; t < 5; ++t) mean += y.value()(i, t, c);
        REQUIRE(mean / 5 == Approx(0.0).margin(1e-9));
      }
  }
}

TEST_CASE("shape ops route gradients correctly", "[autodiff]") {
  Rng rng(10);
  auto x = Var<double>::leaf(random_tensor({2, 6, 4}, rng), true);
  auto v = Var<double>::leaf(random_tensor({2, 3}, rng), true);
  auto build = [&] {
    auto widened = ad::concat_channels<double>(
        {ad::slice_channels(x, 0, 2), ad::reverse_time(x), ad::broadcast_time(v, 6)});
    auto sliced = ad::slice_time(widened, 1, 4);
    auto last = ad::take_time(sliced, 3);
    auto up = ad::zero_stuff_time(sliced, 2);
    return ad::add(ad::mean_all(ad::square(up)), ad::mean_all(ad::vabs(last)));
  };
  REQUIRE(max_rel_grad_err({x, v}, build) < kTol);
}

TEST_CASE("resample map op is the dsp transform with gradients", "[autodiff]") {
  Rng rng(11);
  auto x = Var<double>::leaf(random_tensor({2, 12, 3}, rng), true);
  dsp::ResampleSpec spec;
  spec.k_min = 2;
  spec.k_max = 4;
  std::vector<dsp::ResampleMap> maps;
  for (std::uint64_t s = 0; s < 2; ++s) {
    Rng r(100 + s);
    maps.push_back(dsp::plan_to_map(dsp::draw_resample_plan(12, r, spec)));
  }
  auto y = ad::resample_time(x, maps);

  // forward agrees with the plain dsp application per sample
  for (std::size_t i = 0; i < 2; ++i) {
    Tensor<double> xi({12, 3});
    for (std::size_t t = 0; t < 12; ++t)
      for (std::size_t c = 0; c < 3; ++c) xi(t, c) = x.value()(i, t, c);
    const auto want = dsp::apply_resample_map(xi, maps[i]);
    for (std::size_t t = 0; t < 12; ++t)
      for (std::size_t c = 0; c < 3; ++c) REQUIRE(y.value()(i, t, c) == Approx(want(t, c)));
  }

  auto build = [&] { return ad::mean_all(ad::square(ad::resample_time(x, maps))); };
  REQUIRE(max_rel_grad_err({x}, build) < kTol);
}

TEST_CASE("dropout semantics", "[autodiff]") {
  auto x = Var<double>::leaf(Tensor<double>({1, 10, 8}, 1.0), true);
  SECTION("identity when not training or p=0") {
    Rng r1(0);
    auto y = ad::dropout(x, 0.5, r1, false);
    REQUIRE(y.node() == x.node());
    auto z = ad::dropout(x, 0.0, r1, true);
    REQUIRE(z.node() == x.node());
  }
  SECTION("kept entries are scaled by 1/(1-p)") {
    Rng r2(3);
    auto y = ad::dropout(x, 0.25, r2, true);
    for (std::size_t i = 0; i < y.value().numel(); ++i) {
      const double v = y.value()[i];
      REQUIRE((v == 0.0 || v == Approx(1.0 / 0.75)));
    }
  }
}

TEST_CASE("detach cuts the tape", "[autodiff]") {
  auto x = Var<double>::leaf(Tensor<double>({1, 2, 2}, 3.0), true);
  auto y = ad::scale(x, 2.0).detach();
  auto loss = ad::mean_all(ad::square(y));
  REQUIRE_FALSE(loss.requires_grad());
  ad::backward(ad::mean_all(ad::square(ad::scale(x, 2.0))));  // attached path works
  bool any = false;
  for (std::size_t i = 0; i < 4; ++i) any |= x.grad()[i] != 0.0;
  REQUIRE(any);
}
