#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cwssim/tensor.hpp"

namespace cwssim {

/// Channel-first feature tensor (C, spatial...).
struct FeatureMap {
  TensorND tensor;

  FeatureMap() = default;
  explicit FeatureMap(TensorND t);

  std::size_t channels() const { return tensor.dim(0); }
  Shape spatial_shape() const { return Shape(tensor.shape().begin() + 1, tensor.shape().end()); }
  std::size_t spatial_size() const { return tensor.size() / channels(); }
};

enum class Activation { identity, tanh };

/// Frozen convolutional stack standing in for a pretrained perceptual network.
/// Input is a single-channel image (spatial axes only); output is a FeatureMap.
class FixedFeatureExtractor {
 public:
  struct Layer {
    TensorND kernel;  // (C_out, C_in, k...)
    std::vector<double> bias;
    Activation activation = Activation::tanh;
  };

  FixedFeatureExtractor() = default;
  explicit FixedFeatureExtractor(std::vector<Layer> layers);

  /// Seeded weights, uniform in +-sqrt(3 / fan_in); default widths 1->8->16->16, 3x3 taps.
  static FixedFeatureExtractor make(std::uint64_t seed, std::size_t spatial_rank,
                                    Activation activation = Activation::tanh,
                                    std::vector<std::size_t> widths = {1, 8, 16, 16},
                                    std::size_t kernel_size = 3, bool with_bias = true);

  FeatureMap forward(const TensorND& image) const;
  /// dLoss/dImage given dLoss/dFeatures at `image`.
  TensorND backward(const TensorND& image, const TensorND& grad_features) const;

  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// AdaIN / AdaConv

/// Per channel: sigma_style * (content - mu_content) / sqrt(var_content + eps) + mu_style,
/// with population statistics.
FeatureMap adain(const FeatureMap& content, const FeatureMap& style, double eps = 1e-5);

/// Style-conditioned kernels applied to a content code.
struct AdaConvKernelSet {
  TensorND spatial;    // (C, C/groups, k...)
  TensorND pointwise;  // (C, C)
  std::vector<double> bias;
  std::size_t groups = 1;

  std::size_t channels() const { return spatial.dim(0); }
  void validate() const;

  /// Delta spatial kernels, identity pointwise mixing, zero bias.
  static AdaConvKernelSet identity(std::size_t channels, std::size_t groups, std::size_t kernel_size,
                                   std::size_t spatial_rank);
};

/// Grouped spatial convolution (reflect padding), then pointwise mixing, then bias.
FeatureMap adaconv_apply(const FeatureMap& content, const AdaConvKernelSet& kernels);

/// Three frozen predictors mapping a style code (S, k, k[, k]) to an AdaConv kernel set:
/// a same-padded conv for the spatial kernels and two dense heads on the
/// spatially pooled code for the pointwise kernel and the bias.
struct AdaConvPredictor {
  std::size_t channels = 0;
  std::size_t groups = 1;
  std::size_t kernel_size = 3;
  std::size_t style_channels = 0;
  std::size_t spatial_rank = 2;
  FixedFeatureExtractor::Layer spatial_head;  // conv (C*C/groups, S, 3...)
  TensorND pointwise_head;                    // (C*C, S)
  std::vector<double> pointwise_bias;         // C*C
  TensorND bias_head;                         // (C, S)
  std::vector<double> bias_bias;              // C
  Activation activation = Activation::identity;

  static AdaConvPredictor make(std::uint64_t seed, std::size_t channels, std::size_t groups,
                               std::size_t kernel_size, std::size_t style_channels,
                               std::size_t spatial_rank = 2, Activation activation = Activation::identity,
                               bool zero_bias = false);

  Shape style_code_shape() const;
};

AdaConvKernelSet adaconv_predict(const TensorND& style_code, const AdaConvPredictor& predictor);

// ---------------------------------------------------------------------------
// Convolutional LSTM

struct ConvLSTMState {
  FeatureMap h;
  FeatureMap c;

  static ConvLSTMState zeros(std::size_t hidden_channels, const Shape& spatial);
};

/// Gate convolution over concat(x, h); output channels ordered i, f, o, g.
struct ConvLSTMWeights {
  TensorND kernel;  // (4H, Cx + H, k...)
  std::vector<double> bias;  // 4H

  std::size_t hidden_channels() const { return kernel.dim(0) / 4; }
  std::size_t input_channels() const { return kernel.dim(1) - hidden_channels(); }

  static ConvLSTMWeights zeros(std::size_t input_channels, std::size_t hidden_channels,
                               std::size_t kernel_size, std::size_t spatial_rank);
  static ConvLSTMWeights random(std::uint64_t seed, std::size_t input_channels, std::size_t hidden_channels,
                                std::size_t kernel_size, std::size_t spatial_rank, double scale = 0.5);
};

/// i, f, o = sigmoid(.), g = tanh(.); c' = f*c + i*g; h' = o*tanh(c').
ConvLSTMState convlstm_cell(const FeatureMap& x, const ConvLSTMState& state, const ConvLSTMWeights& w);

inline constexpr std::size_t kSequenceFrames = 5;

/// Forward recurrence over t = 0..N-1, backward over t = N-1..0, both from a
/// zero state; frame t of the result is concat(forward h_t, backward h_t).
std::vector<FeatureMap> bidirectional_convlstm(const std::vector<FeatureMap>& seq, const ConvLSTMWeights& fw,
                                               const ConvLSTMWeights& bw,
                                               std::size_t expected_frames = kSequenceFrames);

// ---------------------------------------------------------------------------
// Losses

enum class GramNorm { by_size, none };

/// Gram(F)_ab = sum_s F_a(s) F_b(s), divided by C*S unless `norm` is none.
TensorND gram(const FeatureMap& f, GramNorm norm = GramNorm::by_size);

/// (1/f) * ||P(g) - P(x)||^2 with f = C * S of the feature map.
double loss_feature(const TensorND& g, const TensorND& x, const FixedFeatureExtractor& P);
TensorND loss_feature_grad(const TensorND& g, const TensorND& x, const FixedFeatureExtractor& P);

/// ||Gram(P(g)) - Gram(P(y))||_F^2.
double loss_style_frob(const TensorND& g, const TensorND& y, const FixedFeatureExtractor& P,
                       GramNorm norm = GramNorm::by_size);
TensorND loss_style_frob_grad(const TensorND& g, const TensorND& y, const FixedFeatureExtractor& P,
                              GramNorm norm = GramNorm::by_size);

/// Mean absolute difference. The gradient is zero where a == b.
double loss_l1(const TensorND& a, const TensorND& b);
TensorND loss_l1_grad(const TensorND& a, const TensorND& b);

/// Mean of (score - target)^2; target must be 0 or 1.
double loss_adv_mse(const TensorND& scores, double target);
TensorND loss_adv_mse_grad(const TensorND& scores, double target);

struct LossBundle {
  double l1_image = 0.0;
  double l1_latent = 0.0;
  double adv_mse = 0.0;
  double feature = 0.0;
  double style_frob = 0.0;
};

struct LossInputs {
  TensorND image, reconstructed_image;
  TensorND latent, reconstructed_latent;
  TensorND discriminator_scores;
  double adversarial_target = 1.0;
  TensorND generated, content, style;
};

LossBundle compute_losses(const LossInputs& in, const FixedFeatureExtractor& P,
                          GramNorm norm = GramNorm::by_size);

// ---------------------------------------------------------------------------
// Gradient verification

enum class LossId { l1, adv_mse, feature, style_frob };

std::string to_string(LossId id);
LossId loss_from_string(const std::string& s);

struct GradCheckInputs {
  TensorND g;      // variable the gradient is taken with respect to
  TensorND other;  // x, y, or the L1 partner; unused for adv_mse
  double target = 1.0;
  std::optional<FixedFeatureExtractor> extractor;
  GramNorm gram_norm = GramNorm::by_size;
};

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t probes = 64;
  /// L1 coordinates with |a - b| below this are resampled.
  double tie_margin = 2e-5;
  double tolerance = 1e-4;
};

struct GradCheckReport {
  LossId loss = LossId::l1;
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  bool ok = true;
  std::string failure;
};

/// Random inputs for one loss: an image pair of `image_shape` (scores for
/// adv_mse) and, for the perceptual losses, a seeded tanh extractor.
GradCheckInputs make_gradcheck_inputs(LossId id, std::uint64_t seed, const Shape& image_shape = {8, 8});

double evaluate_loss(LossId id, const GradCheckInputs& in, const TensorND& g);
TensorND evaluate_loss_grad(LossId id, const GradCheckInputs& in);

/// Central differences on `probes` random coordinates against the analytic
/// gradient; relative error uses max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(LossId id, const GradCheckInputs& inputs, std::uint64_t seed,
                           const GradCheckOptions& opt = {});

}  // namespace cwssim
