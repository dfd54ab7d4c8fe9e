#include <doctest.h>

#include <cmath>

#include "cwssim/neural.hpp"
#include "oracles.hpp"

using namespace cwssim;

namespace {

std::vector<double> channel(const TensorND& t, std::size_t c) {
  const std::size_t s = t.size() / t.dim(0);
  return {t.values().begin() + static_cast<std::ptrdiff_t>(c * s),
          t.values().begin() + static_cast<std::ptrdiff_t>((c + 1) * s)};
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return {m, std::sqrt(var / static_cast<double>(v.size()))};
}

/// Full-image central-difference gradient.
template <class F>
TensorND numeric_grad(F f, TensorND x, double h = 1e-6) {
  TensorND g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double o = x[i];
    x[i] = o + h;
    const double up = f(x);
    x[i] = o - h;
    const double dn = f(x);
    x[i] = o;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("feature extractor forward matches explicit layers") {
  const FixedFeatureExtractor P = FixedFeatureExtractor::make(7, 2);
  REQUIRE(P.layers().size() == 3);
  CHECK(P.layers()[0].kernel.shape() == Shape{8, 1, 3, 3});
  CHECK(P.layers()[2].kernel.shape() == Shape{16, 16, 3, 3});
  const double bound = std::sqrt(3.0 / 72.0);
  for (double v : P.layers()[1].kernel.values()) CHECK(std::abs(v) <= bound);

  Rng rng(1);
  const TensorND img = oracle::random_tensor(rng, {6, 7});
  std::vector<std::vector<double>> act{img.values()};
  for (const auto& L : P.layers()) {
    const std::size_t co = L.kernel.dim(0), ci = L.kernel.dim(1);
    std::vector<std::vector<double>> next(co, std::vector<double>(42, 0.0));
    for (std::size_t o = 0; o < co; ++o) {
      for (std::size_t i = 0; i < ci; ++i) {
        std::vector<double> k(L.kernel.values().begin() + static_cast<std::ptrdiff_t>((o * ci + i) * 9),
                              L.kernel.values().begin() + static_cast<std::ptrdiff_t>((o * ci + i + 1) * 9));
        const auto part = oracle::conv2d_loop(act[i], 6, 7, k, 3, 3, 1);
        for (std::size_t p = 0; p < 42; ++p) next[o][p] += part[p];
      }
      for (auto& v : next[o]) v = std::tanh(v + L.bias[o]);
    }
    act = std::move(next);
  }
  const FeatureMap f = P.forward(img);
  REQUIRE(f.tensor.shape() == Shape{16, 6, 7});
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t p = 0; p < 42; ++p) CHECK(f.tensor[c * 42 + p] == doctest::Approx(act[c][p]).epsilon(1e-12));
}

TEST_CASE("feature extractor backward is the gradient of <w, P(x)>") {
  const FixedFeatureExtractor P = FixedFeatureExtractor::make(9, 2, Activation::tanh, {1, 4, 5});
  Rng rng(2);
  const TensorND img = oracle::random_tensor(rng, {5, 6});
  const TensorND w = oracle::random_tensor(rng, {5, 5, 6}, -1, 1);
  auto f = [&](const TensorND& x) {
    const FeatureMap fm = P.forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * fm.tensor[i];
    return s;
  };
  const TensorND num = numeric_grad(f, img);
  const TensorND ana = P.backward(img, w);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(ana[i] == doctest::Approx(num[i]).epsilon(1e-6));
}

TEST_CASE("adain hand case") {
  // content: mean 1, std 2; style: mean 3, std 4.
  const FeatureMap c(TensorND({1, 2}, std::vector<double>{-1, 3}));
  const FeatureMap s(TensorND({1, 2}, std::vector<double>{-1, 7}));
  const FeatureMap out = adain(c, s, 1e-12);
  CHECK(out.tensor[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(out.tensor[1] == doctest::Approx(7.0).epsilon(1e-12));
  const FeatureMap dflt = adain(c, s);
  const double scale = 4.0 / std::sqrt(4.0 + 1e-5);
  CHECK(dflt.tensor[0] == doctest::Approx(-2.0 * scale + 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(adain(c, FeatureMap(TensorND({2, 2}))), DimensionError);
}

TEST_CASE("adain re-statisticizes each channel") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const FeatureMap c(oracle::random_tensor(rng, {3, 5, 4}, -2, 5));
    FeatureMap s(oracle::random_tensor(rng, {3, 6, 3}, -1, 1));
    for (auto& v : s.tensor.data()) v = 4.0 * v + 10.0;
    const FeatureMap out = adain(c, s, 1e-12);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const auto [mo, so] = mean_std(channel(out.tensor, ch));
      const auto [ms, ss] = mean_std(channel(s.tensor, ch));
      CHECK(mo == doctest::Approx(ms).epsilon(1e-10));
      CHECK(so == doctest::Approx(ss).epsilon(1e-10));
    }
    const FeatureMap self = adain(c, c, 1e-12);
    for (std::size_t i = 0; i < c.tensor.size(); ++i) CHECK(std::abs(self.tensor[i] - c.tensor[i]) <= 1e-10);
  }
}

TEST_CASE("adaconv_apply matches grouped loops, then pointwise, then bias") {
  Rng rng(4);
  const std::size_t C = 4, H = 5, W = 6;
  for (std::size_t groups : {std::size_t{1}, std::size_t{2}, std::size_t{4}}) {
    const std::size_t per = C / groups;
    AdaConvKernelSet k;
    k.groups = groups;
    k.spatial = oracle::random_tensor(rng, {C, per, 3, 3}, -1, 1);
    k.pointwise = oracle::random_tensor(rng, {C, C}, -1, 1);
    k.bias = {0.1, -0.2, 0.3, 0.05};
    const FeatureMap x(oracle::random_tensor(rng, {C, H, W}));
    const FeatureMap y = adaconv_apply(x, k);

    std::vector<std::vector<double>> spatial(C, std::vector<double>(H * W, 0.0));
    for (std::size_t co = 0; co < C; ++co) {
      const std::size_t g = co / per;
      for (std::size_t j = 0; j < per; ++j) {
        std::vector<double> kk(k.spatial.values().begin() + static_cast<std::ptrdiff_t>((co * per + j) * 9),
                               k.spatial.values().begin() + static_cast<std::ptrdiff_t>((co * per + j + 1) * 9));
        const auto part = oracle::conv2d_loop(channel(x.tensor, g * per + j), H, W, kk, 3, 3, 2);
        for (std::size_t p = 0; p < H * W; ++p) spatial[co][p] += part[p];
      }
    }
    for (std::size_t co = 0; co < C; ++co)
      for (std::size_t p = 0; p < H * W; ++p) {
        double acc = k.bias[co];
        for (std::size_t ci = 0; ci < C; ++ci) acc += k.pointwise.at({co, ci}) * spatial[ci][p];
        CHECK(y.tensor[co * H * W + p] == doctest::Approx(acc).epsilon(1e-12));
      }
  }
}

TEST_CASE("adaconv identity kernels and validation") {
  Rng rng(5);
  const FeatureMap x(oracle::random_tensor(rng, {6, 4, 5}));
  for (std::size_t groups : {std::size_t{1}, std::size_t{3}, std::size_t{6}}) {
    const FeatureMap y = adaconv_apply(x, AdaConvKernelSet::identity(6, groups, 3, 2));
    CHECK(y.tensor == x.tensor);
  }
  AdaConvKernelSet bad = AdaConvKernelSet::identity(4, 2, 3, 2);
  bad.groups = 3;
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  bad = AdaConvKernelSet::identity(4, 2, 3, 2);
  bad.bias.pop_back();
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  CHECK_THROWS_AS(adaconv_apply(FeatureMap(TensorND({3, 4, 4})), AdaConvKernelSet::identity(4, 1, 3, 2)),
                  DimensionError);
}

TEST_CASE("adaconv_predict heads") {
  const AdaConvPredictor p = AdaConvPredictor::make(42, 4, 2, 3, 6);
  CHECK(p.style_code_shape() == Shape{6, 3, 3});
  Rng rng(6);
  const TensorND code = oracle::random_tensor(rng, {6, 3, 3}, -1, 1);
  const AdaConvKernelSet k = adaconv_predict(code, p);
  CHECK(k.spatial.shape() == Shape{4, 2, 3, 3});
  CHECK(k.pointwise.shape() == Shape{4, 4});
  CHECK(k.groups == 2);

  // Dense heads on the spatially pooled code.
  std::vector<double> pooled(6, 0.0);
  for (std::size_t c = 0; c < 6; ++c) {
    for (std::size_t i = 0; i < 9; ++i) pooled[c] += code[c * 9 + i] / 9.0;
  }
  for (std::size_t r = 0; r < 16; ++r) {
    double acc = p.pointwise_bias[r];
    for (std::size_t c = 0; c < 6; ++c) acc += p.pointwise_head.at({r, c}) * pooled[c];
    CHECK(k.pointwise[r] == doctest::Approx(acc).epsilon(1e-12));
  }
  for (std::size_t r = 0; r < 4; ++r) {
    double acc = p.bias_bias[r];
    for (std::size_t c = 0; c < 6; ++c) acc += p.bias_head.at({r, c}) * pooled[c];
    CHECK(k.bias[r] == doctest::Approx(acc).epsilon(1e-12));
  }
  // Spatial head: zero-padded 3x3 conv of the code, one output channel per kernel tap set.
  for (std::size_t o = 0; o < 8; ++o) {
    std::vector<double> acc(9, p.spatial_head.bias[o]);
    for (std::size_t c = 0; c < 6; ++c) {
      std::vector<double> kk(p.spatial_head.kernel.values().begin() + static_cast<std::ptrdiff_t>((o * 6 + c) * 9),
                             p.spatial_head.kernel.values().begin() + static_cast<std::ptrdiff_t>((o * 6 + c + 1) * 9));
      const auto part = oracle::conv2d_loop(channel(code, c), 3, 3, kk, 3, 3, 1);
      for (std::size_t i = 0; i < 9; ++i) acc[i] += part[i];
    }
    for (std::size_t i = 0; i < 9; ++i) CHECK(k.spatial[o * 9 + i] == doctest::Approx(acc[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(adaconv_predict(TensorND({5, 3, 3}), p), DimensionError);
}

TEST_CASE("adaconv_predict golden checksum") {
  // Frozen output for seed 42 on a fixed code; guards against silent changes
  // to the predictor's weight draw order.
  const AdaConvPredictor p = AdaConvPredictor::make(42, 4, 2, 3, 6);
  TensorND code({6, 3, 3});
  for (std::size_t i = 0; i < code.size(); ++i) code[i] = std::sin(0.37 * static_cast<double>(i));
  const AdaConvKernelSet k = adaconv_predict(code, p);
  double s = 0.0, q = 0.0;
  for (const TensorND* t : {&k.spatial, &k.pointwise})
    for (double v : t->values()) {
      s += v;
      q += v * v;
    }
  for (double v : k.bias) {
    s += v;
    q += v * v;
  }
  CHECK(s == doctest::Approx(-2.7026294981566839).epsilon(1e-12));
  CHECK(q == doctest::Approx(31.705103070423256).epsilon(1e-12));
}

TEST_CASE("convlstm cell matches the scalar oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const ConvLSTMWeights w = ConvLSTMWeights::random(100 + trial, 2, 3, 3, 2);
    const FeatureMap x(oracle::random_tensor(rng, {2, 5, 4}, -1, 1));
    ConvLSTMState st{FeatureMap(oracle::random_tensor(rng, {3, 5, 4}, -1, 1)),
                     FeatureMap(oracle::random_tensor(rng, {3, 5, 4}, -1, 1))};
    const ConvLSTMState next = convlstm_cell(x, st, w);
    TensorND h, c;
    oracle::convlstm_step(x.tensor, st.h.tensor, st.c.tensor, w.kernel, w.bias, h, c);
    for (std::size_t i = 0; i < h.size(); ++i) {
      CHECK(std::abs(next.h.tensor[i] - h[i]) <= 1e-12);
      CHECK(std::abs(next.c.tensor[i] - c[i]) <= 1e-12);
    }
  }
}

TEST_CASE("convlstm with zero weights halves the cell state") {
  const ConvLSTMWeights w = ConvLSTMWeights::zeros(1, 2, 3, 2);
  Rng rng(8);
  ConvLSTMState st{FeatureMap(TensorND({2, 3, 3})), FeatureMap(oracle::random_tensor(rng, {2, 3, 3}, -2, 2))};
  const ConvLSTMState n = convlstm_cell(FeatureMap(TensorND({1, 3, 3}, 1.0)), st, w);
  for (std::size_t i = 0; i < 18; ++i) {
    CHECK(n.c.tensor[i] == doctest::Approx(0.5 * st.c.tensor[i]));
    CHECK(n.h.tensor[i] == doctest::Approx(0.5 * std::tanh(0.5 * st.c.tensor[i])));
  }
  CHECK_THROWS_AS(convlstm_cell(FeatureMap(TensorND({2, 3, 3})), st, w), DimensionError);
}

TEST_CASE("bidirectional convlstm unrolls both directions") {
  Rng rng(9);
  const ConvLSTMWeights fw = ConvLSTMWeights::random(1, 1, 2, 3, 2);
  const ConvLSTMWeights bw = ConvLSTMWeights::random(2, 1, 2, 3, 2);
  std::vector<FeatureMap> seq;
  for (int t = 0; t < 5; ++t) seq.emplace_back(oracle::random_tensor(rng, {1, 4, 4}, -1, 1));
  const auto out = bidirectional_convlstm(seq, fw, bw);
  REQUIRE(out.size() == 5);

  std::vector<TensorND> hf(5), hb(5);
  TensorND h({2, 4, 4}), c({2, 4, 4}), h2, c2;
  for (int t = 0; t < 5; ++t) {
    oracle::convlstm_step(seq[static_cast<std::size_t>(t)].tensor, h, c, fw.kernel, fw.bias, h2, c2);
    h = h2;
    c = c2;
    hf[static_cast<std::size_t>(t)] = h;
  }
  h = TensorND({2, 4, 4});
  c = TensorND({2, 4, 4});
  for (int t = 4; t >= 0; --t) {
    oracle::convlstm_step(seq[static_cast<std::size_t>(t)].tensor, h, c, bw.kernel, bw.bias, h2, c2);
    h = h2;
    c = c2;
    hb[static_cast<std::size_t>(t)] = h;
  }
  for (std::size_t t = 0; t < 5; ++t) {
    REQUIRE(out[t].tensor.shape() == Shape{4, 4, 4});
    for (std::size_t i = 0; i < 32; ++i) {
      CHECK(std::abs(out[t].tensor[i] - hf[t][i]) <= 1e-12);
      CHECK(std::abs(out[t].tensor[32 + i] - hb[t][i]) <= 1e-12);
    }
  }
  seq.pop_back();
  CHECK_THROWS_AS(bidirectional_convlstm(seq, fw, bw), DimensionError);
}

TEST_CASE("gram and losses against scalar loops") {
  const FeatureMap f(TensorND({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}));
  const TensorND g = gram(f, GramNorm::none);
  CHECK(g.values() == std::vector<double>{14, 32, 32, 77});
  const TensorND gn = gram(f);
  CHECK(gn.at({0, 1}) == doctest::Approx(32.0 / 6.0));

  const TensorND a({4}, std::vector<double>{1, 2, 3, 4});
  const TensorND b({4}, std::vector<double>{2, 2, 1, 8});
  CHECK(loss_l1(a, b) == doctest::Approx((1 + 0 + 2 + 4) / 4.0));
  CHECK(loss_l1_grad(a, b).values() == std::vector<double>{-0.25, 0.0, 0.25, -0.25});
  CHECK(loss_adv_mse(a, 1.0) == doctest::Approx((0 + 1 + 4 + 9) / 4.0));
  CHECK(loss_adv_mse_grad(a, 0.0).values() == std::vector<double>{0.5, 1.0, 1.5, 2.0});
  CHECK_THROWS_AS(loss_adv_mse(a, 0.5), ValidationError);

  const FixedFeatureExtractor P = FixedFeatureExtractor::make(11, 2);
  Rng rng(10);
  const TensorND x = oracle::random_tensor(rng, {6, 6}), y = oracle::random_tensor(rng, {6, 6});
  const TensorND fx = P.forward(x).tensor, fy = P.forward(y).tensor;
  double fl = 0.0;
  for (std::size_t i = 0; i < fx.size(); ++i) fl += (fx[i] - fy[i]) * (fx[i] - fy[i]);
  CHECK(loss_feature(x, y, P) == doctest::Approx(fl / (16.0 * 36.0)).epsilon(1e-12));

  double sl = 0.0;
  for (std::size_t p = 0; p < 16; ++p)
    for (std::size_t q = 0; q < 16; ++q) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t s = 0; s < 36; ++s) {
        gx += fx[p * 36 + s] * fx[q * 36 + s];
        gy += fy[p * 36 + s] * fy[q * 36 + s];
      }
      const double d = (gx - gy) / (16.0 * 36.0);
      sl += d * d;
    }
  CHECK(loss_style_frob(x, y, P) == doctest::Approx(sl).epsilon(1e-12));

  LossInputs in{a, b, b, a, a, 1.0, x, y, y};
  const LossBundle lb = compute_losses(in, P);
  CHECK(lb.l1_image == loss_l1(a, b));
  CHECK(lb.adv_mse == loss_adv_mse(a, 1.0));
  CHECK(lb.feature == loss_feature(x, y, P));
  CHECK(lb.style_frob == loss_style_frob(x, y, P));
}

TEST_CASE("perceptual loss gradients against full finite differences") {
  const FixedFeatureExtractor P = FixedFeatureExtractor::make(12, 2, Activation::tanh, {1, 4, 6});
  Rng rng(11);
  const TensorND x = oracle::random_tensor(rng, {5, 5}), y = oracle::random_tensor(rng, {5, 5});
  for (GramNorm norm : {GramNorm::by_size, GramNorm::none}) {
    const TensorND num = numeric_grad([&](const TensorND& g) { return loss_style_frob(g, y, P, norm); }, x);
    const TensorND ana = loss_style_frob_grad(x, y, P, norm);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(ana[i] == doctest::Approx(num[i]).epsilon(1e-5));
  }
  const TensorND num = numeric_grad([&](const TensorND& g) { return loss_feature(g, y, P); }, x);
  const TensorND ana = loss_feature_grad(x, y, P);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(ana[i] == doctest::Approx(num[i]).epsilon(1e-5));
}

TEST_CASE("grad_check passes for every loss and reports its probes") {
  for (LossId id : {LossId::l1, LossId::adv_mse, LossId::feature, LossId::style_frob}) {
    CHECK(loss_from_string(to_string(id)) == id);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const GradCheckReport r = grad_check(id, make_gradcheck_inputs(id, seed), seed);
      INFO(to_string(id), " seed ", seed, " err ", r.max_rel_error, " ", r.failure);
      CHECK(r.ok);
      CHECK(r.probes == 64);
      CHECK(r.max_rel_error <= 1e-4);
    }
  }
  CHECK_THROWS_AS(loss_from_string("l3"), ValidationError);

  // Tolerance is enforced: a coarse step on a curved loss must fail a tight bound.
  GradCheckInputs in = make_gradcheck_inputs(LossId::feature, 5);
  in.extractor = FixedFeatureExtractor::make(99, 2);
  GradCheckOptions tight;
  tight.step = 1e-1;  // large step: central difference visibly wrong on a curved loss
  tight.tolerance = 1e-9;
  const GradCheckReport bad = grad_check(LossId::feature, in, 5, tight);
  CHECK_FALSE(bad.ok);
  CHECK_FALSE(bad.failure.empty());
}
