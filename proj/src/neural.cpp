#include "cwssim/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cwssim/rng.hpp"

namespace cwssim {

FeatureMap::FeatureMap(TensorND t) : tensor(std::move(t)) {
  if (tensor.rank() < 2)
    throw DimensionError("feature map needs (C, spatial...), got " + shape_to_string(tensor.shape()));
}

namespace {

Shape with_batch(const Shape& s) {
  Shape b{1};
  b.insert(b.end(), s.begin(), s.end());
  return b;
}

Shape drop_batch(const Shape& s) { return Shape(s.begin() + 1, s.end()); }

void add_channel_bias(TensorND& x, const std::vector<double>& bias) {
  // x is (1, C, spatial...)
  const std::size_t c = x.dim(1);
  if (bias.empty()) return;
  if (bias.size() != c)
    throw DimensionError("bias of length " + std::to_string(bias.size()) + " for " + std::to_string(c) +
                         " channels");
  const std::size_t s = x.size() / c;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < s; ++i) x[ch * s + i] += bias[ch];
}

void apply_activation(TensorND& x, Activation a) {
  if (a == Activation::tanh)
    for (auto& v : x.data()) v = std::tanh(v);
}

TensorND random_tensor(Rng& rng, Shape shape, double bound) {
  TensorND t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

std::vector<double> random_vector(Rng& rng, std::size_t n, double bound) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Feature extractor

FixedFeatureExtractor::FixedFeatureExtractor(std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    if (L.kernel.rank() < 3) throw DimensionError("extractor kernels need (C_out, C_in, k...)");
    if (l > 0 && L.kernel.dim(1) != layers_[l - 1].kernel.dim(0))
      throw DimensionError("extractor layer " + std::to_string(l) + " input channels do not chain");
  }
  if (!layers_.empty() && layers_.front().kernel.dim(1) != 1)
    throw DimensionError("extractor input must be single-channel");
}

FixedFeatureExtractor FixedFeatureExtractor::make(std::uint64_t seed, std::size_t spatial_rank, Activation activation,
                                                  std::vector<std::size_t> widths, std::size_t kernel_size,
                                                  bool with_bias) {
  if (widths.size() < 2 || widths.front() != 1) throw ValidationError("extractor widths must start at 1");
  Rng rng(seed);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Shape ks{widths[l + 1], widths[l]};
    ks.insert(ks.end(), spatial_rank, kernel_size);
    const double fan_in = static_cast<double>(shape_product(ks) / widths[l + 1]);
    const double bound = std::sqrt(3.0 / fan_in);
    Layer layer;
    layer.kernel = random_tensor(rng, ks, bound);
    if (with_bias) layer.bias = random_vector(rng, widths[l + 1], 0.1);
    layer.activation = activation;
    layers.push_back(std::move(layer));
  }
  return FixedFeatureExtractor(std::move(layers));
}

FeatureMap FixedFeatureExtractor::forward(const TensorND& image) const {
  TensorND x = image.reshaped(with_batch(with_batch(image.shape())));
  for (const auto& L : layers_) {
    x = conv(x, L.kernel, Padding::zero);
    add_channel_bias(x, L.bias);
    apply_activation(x, L.activation);
  }
  return FeatureMap(x.reshaped(drop_batch(x.shape())));
}

TensorND FixedFeatureExtractor::backward(const TensorND& image, const TensorND& grad_features) const {
  std::vector<TensorND> inputs, activations;
  TensorND x = image.reshaped(with_batch(with_batch(image.shape())));
  for (const auto& L : layers_) {
    inputs.push_back(x);
    x = conv(x, L.kernel, Padding::zero);
    add_channel_bias(x, L.bias);
    apply_activation(x, L.activation);
    activations.push_back(x);
  }
  if (grad_features.size() != x.size())
    throw DimensionError("feature gradient " + shape_to_string(grad_features.shape()) + " vs features " +
                         shape_to_string(drop_batch(x.shape())));
  TensorND grad = grad_features.reshaped(x.shape());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& L = layers_[l];
    if (L.activation == Activation::tanh) {
      const auto& a = activations[l];
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= 1.0 - a[i] * a[i];
    }
    grad = conv_input_grad(grad, L.kernel, inputs[l].shape(), Padding::zero);
  }
  return grad.reshaped(image.shape());
}

// ---------------------------------------------------------------------------
// AdaIN

FeatureMap adain(const FeatureMap& content, const FeatureMap& style, double eps) {
  if (content.channels() != style.channels())
    throw DimensionError("adain: content has " + std::to_string(content.channels()) + " channels, style has " +
                         std::to_string(style.channels()));
  if (!(eps > 0.0)) throw ValidationError("adain eps must be positive");
  auto stats = [](const FeatureMap& f, std::size_t c) {
    const std::size_t s = f.spatial_size();
    const double* p = f.tensor.data().data() + c * s;
    double mu = 0.0;
    for (std::size_t i = 0; i < s; ++i) mu += p[i];
    mu /= static_cast<double>(s);
    double var = 0.0;
    for (std::size_t i = 0; i < s; ++i) var += (p[i] - mu) * (p[i] - mu);
    return std::pair{mu, var / static_cast<double>(s)};
  };
  FeatureMap out = content;
  const std::size_t s = content.spatial_size();
  for (std::size_t c = 0; c < content.channels(); ++c) {
    const auto [mu_c, var_c] = stats(content, c);
    const auto [mu_s, var_s] = stats(style, c);
    const double scale = std::sqrt(var_s) / std::sqrt(var_c + eps);
    double* p = out.tensor.data().data() + c * s;
    for (std::size_t i = 0; i < s; ++i) p[i] = scale * (p[i] - mu_c) + mu_s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// AdaConv

void AdaConvKernelSet::validate() const {
  if (spatial.rank() < 3) throw DimensionError("AdaConv spatial kernel needs (C, C/groups, k...)");
  const std::size_t c = spatial.dim(0);
  if (groups == 0 || c % groups)
    throw DimensionError("AdaConv groups " + std::to_string(groups) + " do not divide " + std::to_string(c) +
                         " channels");
  if (spatial.dim(1) != c / groups)
    throw DimensionError("AdaConv spatial kernel has " + std::to_string(spatial.dim(1)) +
                         " inputs per group, expected " + std::to_string(c / groups));
  for (std::size_t a = 2; a < spatial.rank(); ++a)
    if (spatial.dim(a) % 2 == 0) throw DimensionError("AdaConv spatial kernel must be odd-sized");
  if (pointwise.shape() != Shape{c, c})
    throw DimensionError("AdaConv pointwise kernel must be " + shape_to_string({c, c}) + ", got " +
                         shape_to_string(pointwise.shape()));
  if (bias.size() != c) throw DimensionError("AdaConv bias length must equal channel count");
}

AdaConvKernelSet AdaConvKernelSet::identity(std::size_t channels, std::size_t groups, std::size_t kernel_size,
                                            std::size_t spatial_rank) {
  if (groups == 0 || channels % groups) throw DimensionError("groups must divide channels");
  if (kernel_size % 2 == 0) throw DimensionError("AdaConv spatial kernel must be odd-sized");
  const std::size_t per = channels / groups;
  Shape ks{channels, per};
  ks.insert(ks.end(), spatial_rank, kernel_size);
  AdaConvKernelSet k;
  k.groups = groups;
  k.spatial = TensorND(ks);
  const std::size_t taps = shape_product(Shape(ks.begin() + 2, ks.end()));
  for (std::size_t co = 0; co < channels; ++co) k.spatial[(co * per + co % per) * taps + taps / 2] = 1.0;
  k.pointwise = TensorND({channels, channels});
  for (std::size_t c = 0; c < channels; ++c) k.pointwise.at({c, c}) = 1.0;
  k.bias.assign(channels, 0.0);
  return k;
}

FeatureMap adaconv_apply(const FeatureMap& content, const AdaConvKernelSet& kernels) {
  kernels.validate();
  const std::size_t c = kernels.channels();
  if (content.channels() != c)
    throw DimensionError("AdaConv kernels expect " + std::to_string(c) + " channels, content has " +
                         std::to_string(content.channels()));
  if (content.tensor.rank() != kernels.spatial.rank() - 1)
    throw DimensionError("AdaConv kernel rank does not match content spatial rank");
  TensorND x = content.tensor.reshaped(with_batch(content.tensor.shape()));
  x = conv(x, kernels.spatial, Padding::reflect, kernels.groups);
  Shape pw{c, c};
  pw.insert(pw.end(), content.tensor.rank() - 1, 1);
  x = conv(x, kernels.pointwise.reshaped(pw), Padding::valid);
  add_channel_bias(x, kernels.bias);
  return FeatureMap(x.reshaped(content.tensor.shape()));
}

AdaConvPredictor AdaConvPredictor::make(std::uint64_t seed, std::size_t channels, std::size_t groups,
                                        std::size_t kernel_size, std::size_t style_channels, std::size_t spatial_rank,
                                        Activation activation, bool zero_bias) {
  if (groups == 0 || channels % groups) throw DimensionError("groups must divide channels");
  if (kernel_size % 2 == 0) throw DimensionError("AdaConv spatial kernel must be odd-sized");
  Rng rng(seed);
  AdaConvPredictor p;
  p.channels = channels;
  p.groups = groups;
  p.kernel_size = kernel_size;
  p.style_channels = style_channels;
  p.spatial_rank = spatial_rank;
  p.activation = activation;

  const std::size_t spatial_out = channels * (channels / groups);
  Shape ks{spatial_out, style_channels};
  ks.insert(ks.end(), spatial_rank, 3);
  const double conv_bound = std::sqrt(3.0 / static_cast<double>(shape_product(ks) / spatial_out));
  p.spatial_head.kernel = random_tensor(rng, ks, conv_bound);
  p.spatial_head.bias = zero_bias ? std::vector<double>(spatial_out, 0.0) : random_vector(rng, spatial_out, 0.1);
  p.spatial_head.activation = activation;

  const double dense_bound = std::sqrt(3.0 / static_cast<double>(style_channels));
  p.pointwise_head = random_tensor(rng, {channels * channels, style_channels}, dense_bound);
  p.pointwise_bias =
      zero_bias ? std::vector<double>(channels * channels, 0.0) : random_vector(rng, channels * channels, 0.1);
  p.bias_head = random_tensor(rng, {channels, style_channels}, dense_bound);
  p.bias_bias = zero_bias ? std::vector<double>(channels, 0.0) : random_vector(rng, channels, 0.1);
  return p;
}

Shape AdaConvPredictor::style_code_shape() const {
  Shape s{style_channels};
  s.insert(s.end(), spatial_rank, kernel_size);
  return s;
}

AdaConvKernelSet adaconv_predict(const TensorND& style_code, const AdaConvPredictor& p) {
  if (style_code.shape() != p.style_code_shape())
    throw DimensionError("style code " + shape_to_string(style_code.shape()) + " does not match predictor input " +
                         shape_to_string(p.style_code_shape()));
  AdaConvKernelSet k;
  k.groups = p.groups;

  TensorND x = conv(style_code.reshaped(with_batch(style_code.shape())), p.spatial_head.kernel, Padding::zero);
  add_channel_bias(x, p.spatial_head.bias);
  apply_activation(x, p.activation);
  Shape ks{p.channels, p.channels / p.groups};
  ks.insert(ks.end(), p.spatial_rank, p.kernel_size);
  k.spatial = x.reshaped(ks);

  const std::size_t s = p.style_channels;
  const std::size_t taps = style_code.size() / s;
  std::vector<double> pooled(s, 0.0);
  for (std::size_t c = 0; c < s; ++c) {
    for (std::size_t i = 0; i < taps; ++i) pooled[c] += style_code[c * taps + i];
    pooled[c] /= static_cast<double>(taps);
  }
  auto dense = [&](const TensorND& w, const std::vector<double>& b) {
    TensorND out({w.dim(0)});
    for (std::size_t r = 0; r < w.dim(0); ++r) {
      double acc = b[r];
      for (std::size_t c = 0; c < s; ++c) acc += w[r * s + c] * pooled[c];
      out[r] = acc;
    }
    apply_activation(out, p.activation);
    return out;
  };
  k.pointwise = dense(p.pointwise_head, p.pointwise_bias).reshaped({p.channels, p.channels});
  const TensorND b = dense(p.bias_head, p.bias_bias);
  k.bias.assign(b.values().begin(), b.values().end());
  k.validate();
  return k;
}

// ---------------------------------------------------------------------------
// ConvLSTM

ConvLSTMState ConvLSTMState::zeros(std::size_t hidden_channels, const Shape& spatial) {
  Shape s{hidden_channels};
  s.insert(s.end(), spatial.begin(), spatial.end());
  return {FeatureMap(TensorND(s)), FeatureMap(TensorND(s))};
}

ConvLSTMWeights ConvLSTMWeights::zeros(std::size_t input_channels, std::size_t hidden_channels,
                                       std::size_t kernel_size, std::size_t spatial_rank) {
  Shape ks{4 * hidden_channels, input_channels + hidden_channels};
  ks.insert(ks.end(), spatial_rank, kernel_size);
  return {TensorND(ks), std::vector<double>(4 * hidden_channels, 0.0)};
}

ConvLSTMWeights ConvLSTMWeights::random(std::uint64_t seed, std::size_t input_channels, std::size_t hidden_channels,
                                        std::size_t kernel_size, std::size_t spatial_rank, double scale) {
  Rng rng(seed);
  ConvLSTMWeights w = zeros(input_channels, hidden_channels, kernel_size, spatial_rank);
  for (auto& v : w.kernel.data()) v = rng.uniform(-scale, scale);
  for (auto& v : w.bias) v = rng.uniform(-scale, scale);
  return w;
}

ConvLSTMState convlstm_cell(const FeatureMap& x, const ConvLSTMState& state, const ConvLSTMWeights& w) {
  const std::size_t hc = w.hidden_channels();
  if (w.kernel.rank() < 3 || w.kernel.dim(0) != 4 * hc || w.bias.size() != 4 * hc)
    throw DimensionError("ConvLSTM weights must be (4H, Cx+H, k...) with a 4H bias");
  if (w.kernel.rank() != x.tensor.rank() + 1)
    throw DimensionError("ConvLSTM kernel rank does not match input spatial rank");
  if (x.channels() != w.input_channels())
    throw DimensionError("ConvLSTM expects " + std::to_string(w.input_channels()) + " input channels, got " +
                         std::to_string(x.channels()));
  if (state.h.channels() != hc || !state.h.tensor.same_shape(state.c.tensor) ||
      state.h.spatial_shape() != x.spatial_shape())
    throw DimensionError("ConvLSTM state " + shape_to_string(state.h.tensor.shape()) +
                         " inconsistent with input " + shape_to_string(x.tensor.shape()));

  const TensorND parts[] = {x.tensor, state.h.tensor};
  TensorND xh = TensorND::concat(parts);
  TensorND gates = conv(xh.reshaped(with_batch(xh.shape())), w.kernel, Padding::zero);
  add_channel_bias(gates, w.bias);

  const std::size_t s = x.spatial_size();
  const double* gd = gates.data().data();
  ConvLSTMState next = state;
  double* c_out = next.c.tensor.data().data();
  double* h_out = next.h.tensor.data().data();
  const double* c_in = state.c.tensor.data().data();
  for (std::size_t ch = 0; ch < hc; ++ch)
    for (std::size_t p = 0; p < s; ++p) {
      const std::size_t idx = ch * s + p;
      const double i = sigmoid(gd[(0 * hc + ch) * s + p]);
      const double f = sigmoid(gd[(1 * hc + ch) * s + p]);
      const double o = sigmoid(gd[(2 * hc + ch) * s + p]);
      const double g = std::tanh(gd[(3 * hc + ch) * s + p]);
      c_out[idx] = f * c_in[idx] + i * g;
      h_out[idx] = o * std::tanh(c_out[idx]);
    }
  return next;
}

std::vector<FeatureMap> bidirectional_convlstm(const std::vector<FeatureMap>& seq, const ConvLSTMWeights& fw,
                                               const ConvLSTMWeights& bw, std::size_t expected_frames) {
  if (seq.size() != expected_frames)
    throw DimensionError("bidirectional ConvLSTM expects " + std::to_string(expected_frames) + " frames, got " +
                         std::to_string(seq.size()));
  for (const auto& f : seq)
    if (!f.tensor.same_shape(seq.front().tensor))
      throw DimensionError("frame shape " + shape_to_string(f.tensor.shape()) + " differs from " +
                           shape_to_string(seq.front().tensor.shape()));
  const std::size_t n = seq.size();
  const Shape spatial = seq.front().spatial_shape();
  std::vector<TensorND> hf(n), hb(n);
  ConvLSTMState s = ConvLSTMState::zeros(fw.hidden_channels(), spatial);
  for (std::size_t t = 0; t < n; ++t) {
    s = convlstm_cell(seq[t], s, fw);
    hf[t] = s.h.tensor;
  }
  s = ConvLSTMState::zeros(bw.hidden_channels(), spatial);
  for (std::size_t t = n; t-- > 0;) {
    s = convlstm_cell(seq[t], s, bw);
    hb[t] = s.h.tensor;
  }
  std::vector<FeatureMap> out;
  out.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const TensorND parts[] = {hf[t], hb[t]};
    out.emplace_back(TensorND::concat(parts));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

TensorND gram(const FeatureMap& f, GramNorm norm) {
  const std::size_t c = f.channels(), s = f.spatial_size();
  const double* d = f.tensor.data().data();
  TensorND g({c, c});
  const double scale = norm == GramNorm::by_size ? 1.0 / static_cast<double>(c * s) : 1.0;
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = a; b < c; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s; ++i) acc += d[a * s + i] * d[b * s + i];
      g[a * c + b] = g[b * c + a] = acc * scale;
    }
  return g;
}

double loss_feature(const TensorND& g, const TensorND& x, const FixedFeatureExtractor& P) {
  require_same_shape(g, x, "loss_feature");
  const FeatureMap fg = P.forward(g), fx = P.forward(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < fg.tensor.size(); ++i) {
    const double d = fg.tensor[i] - fx.tensor[i];
    acc += d * d;
  }
  return acc / static_cast<double>(fg.tensor.size());
}

TensorND loss_feature_grad(const TensorND& g, const TensorND& x, const FixedFeatureExtractor& P) {
  require_same_shape(g, x, "loss_feature");
  const FeatureMap fg = P.forward(g), fx = P.forward(x);
  TensorND d = fg.tensor - fx.tensor;
  d *= 2.0 / static_cast<double>(d.size());
  return P.backward(g, d);
}

double loss_style_frob(const TensorND& g, const TensorND& y, const FixedFeatureExtractor& P, GramNorm norm) {
  require_same_shape(g, y, "loss_style_frob");
  const TensorND d = gram(P.forward(g), norm) - gram(P.forward(y), norm);
  double acc = 0.0;
  for (double v : d.values()) acc += v * v;
  return acc;
}

TensorND loss_style_frob_grad(const TensorND& g, const TensorND& y, const FixedFeatureExtractor& P, GramNorm norm) {
  require_same_shape(g, y, "loss_style_frob");
  const FeatureMap fg = P.forward(g);
  const TensorND d = gram(fg, norm) - gram(P.forward(y), norm);
  const std::size_t c = fg.channels(), s = fg.spatial_size();
  const double scale = 4.0 * (norm == GramNorm::by_size ? 1.0 / static_cast<double>(c * s) : 1.0);
  TensorND grad(fg.tensor.shape());
  const double* f = fg.tensor.data().data();
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = 0; b < c; ++b) {
      const double w = scale * d[a * c + b];
      for (std::size_t i = 0; i < s; ++i) grad[a * s + i] += w * f[b * s + i];
    }
  return P.backward(g, grad);
}

double loss_l1(const TensorND& a, const TensorND& b) {
  require_same_shape(a, b, "loss_l1");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

TensorND loss_l1_grad(const TensorND& a, const TensorND& b) {
  require_same_shape(a, b, "loss_l1");
  TensorND g(a.shape());
  const double inv = 1.0 / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    g[i] = d > 0.0 ? inv : d < 0.0 ? -inv : 0.0;
  }
  return g;
}

namespace {

void check_adv_inputs(const TensorND& scores, double target) {
  if (target != 0.0 && target != 1.0) throw ValidationError("adversarial target must be 0 or 1");
  if (!scores.all_finite()) throw ValidationError("adversarial scores must be finite");
}

}  // namespace

double loss_adv_mse(const TensorND& scores, double target) {
  check_adv_inputs(scores, target);
  double acc = 0.0;
  for (double v : scores.values()) acc += (v - target) * (v - target);
  return acc / static_cast<double>(scores.size());
}

TensorND loss_adv_mse_grad(const TensorND& scores, double target) {
  check_adv_inputs(scores, target);
  TensorND g(scores.shape());
  const double k = 2.0 / static_cast<double>(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) g[i] = k * (scores[i] - target);
  return g;
}

LossBundle compute_losses(const LossInputs& in, const FixedFeatureExtractor& P, GramNorm norm) {
  LossBundle b;
  b.l1_image = loss_l1(in.image, in.reconstructed_image);
  b.l1_latent = loss_l1(in.latent, in.reconstructed_latent);
  b.adv_mse = loss_adv_mse(in.discriminator_scores, in.adversarial_target);
  b.feature = loss_feature(in.generated, in.content, P);
  b.style_frob = loss_style_frob(in.generated, in.style, P, norm);
  return b;
}

// ---------------------------------------------------------------------------
// Gradient check

std::string to_string(LossId id) {
  switch (id) {
    case LossId::l1: return "l1";
    case LossId::adv_mse: return "adv_mse";
    case LossId::feature: return "feature";
    case LossId::style_frob: return "style_frob";
  }
  return "?";
}

LossId loss_from_string(const std::string& s) {
  for (auto id : {LossId::l1, LossId::adv_mse, LossId::feature, LossId::style_frob})
    if (to_string(id) == s) return id;
  throw ValidationError("unknown loss '" + s + "'");
}

GradCheckInputs make_gradcheck_inputs(LossId id, std::uint64_t seed, const Shape& image_shape) {
  Rng rng(mix_seed(seed, 1));
  GradCheckInputs in;
  in.g = TensorND(image_shape);
  in.other = TensorND(image_shape);
  if (id == LossId::adv_mse) {
    for (auto& v : in.g.data()) v = rng.uniform(-0.5, 1.5);
    in.target = static_cast<double>(seed % 2);
    return in;
  }
  for (auto& v : in.g.data()) v = rng.uniform();
  for (auto& v : in.other.data()) v = rng.uniform();
  if (id == LossId::feature || id == LossId::style_frob)
    in.extractor = FixedFeatureExtractor::make(mix_seed(seed, 2), image_shape.size());
  return in;
}

double evaluate_loss(LossId id, const GradCheckInputs& in, const TensorND& g) {
  switch (id) {
    case LossId::l1: return loss_l1(g, in.other);
    case LossId::adv_mse: return loss_adv_mse(g, in.target);
    case LossId::feature: return loss_feature(g, in.other, in.extractor.value());
    case LossId::style_frob: return loss_style_frob(g, in.other, in.extractor.value(), in.gram_norm);
  }
  return 0.0;
}

TensorND evaluate_loss_grad(LossId id, const GradCheckInputs& in) {
  switch (id) {
    case LossId::l1: return loss_l1_grad(in.g, in.other);
    case LossId::adv_mse: return loss_adv_mse_grad(in.g, in.target);
    case LossId::feature: return loss_feature_grad(in.g, in.other, in.extractor.value());
    case LossId::style_frob: return loss_style_frob_grad(in.g, in.other, in.extractor.value(), in.gram_norm);
  }
  return {};
}

GradCheckReport grad_check(LossId id, const GradCheckInputs& inputs, std::uint64_t seed,
                           const GradCheckOptions& opt) {
  GradCheckReport rep;
  rep.loss = id;
  if ((id == LossId::feature || id == LossId::style_frob) && !inputs.extractor)
    throw ValidationError("perceptual loss gradient check needs an extractor");

  const TensorND analytic = evaluate_loss_grad(id, inputs);
  if (!analytic.all_finite()) {
    rep.ok = false;
    rep.failure = "analytic gradient is not finite";
    return rep;
  }

  const std::size_t n = inputs.g.size();
  auto usable = [&](std::size_t i) {
    return id != LossId::l1 || std::abs(inputs.g[i] - inputs.other[i]) >= opt.tie_margin;
  };
  std::vector<std::size_t> coords;
  if (n <= opt.probes) {
    for (std::size_t i = 0; i < n; ++i)
      if (usable(i)) coords.push_back(i);
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, 3));
    for (std::size_t i = 0; i < n && coords.size() < opt.probes; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(order[i], order[j]);
      if (usable(order[i])) coords.push_back(order[i]);
    }
  }

  TensorND g = inputs.g;
  for (std::size_t i : coords) {
    const double orig = g[i];
    g[i] = orig + opt.step;
    const double up = evaluate_loss(id, inputs, g);
    g[i] = orig - opt.step;
    const double down = evaluate_loss(id, inputs, g);
    g[i] = orig;
    const double numeric = (up - down) / (2.0 * opt.step);
    if (!std::isfinite(numeric)) {
      rep.ok = false;
      rep.failure = "non-finite numeric gradient at coordinate " + std::to_string(i);
      return rep;
    }
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    rep.max_rel_error = std::max(rep.max_rel_error, std::abs(analytic[i] - numeric) / denom);
  }
  rep.probes = coords.size();
  if (rep.probes == 0) {
    rep.ok = false;
    rep.failure = "no usable probe coordinates";
  } else if (!(rep.max_rel_error <= opt.tolerance)) {
    rep.ok = false;
    rep.failure = "max relative error " + std::to_string(rep.max_rel_error) + " exceeds " + std::to_string(opt.tolerance);
  }
  return rep;
}

}  // namespace cwssim
