#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cwssim/tensor.hpp"

namespace cwssim {

/// A time series of 2D images or 3D volumes, frames along axis 0 (T, [Z,] Y, X).
struct VolumeSequence {
  TensorND frames;
  /// Physical voxel spacing in mm, one entry per spatial axis (empty = unit).
  std::vector<double> spacing_mm;

  std::size_t frame_count() const { return frames.dim(0); }
  Shape frame_shape() const { return Shape(frames.shape().begin() + 1, frames.shape().end()); }
  TensorND frame(std::size_t t) const { return frames.slice(t); }
  /// Spacing with unit defaults filled in.
  std::vector<double> spacing() const;
};

/// Contrast-enhanced voxels; `mask` holds 0.0 / 1.0 over the frame shape.
struct CEMask {
  TensorND mask;
  double threshold_used = 20.0;
  std::size_t baseline_index = 0;

  std::size_t count() const;
};

enum class SpacingMode { voxel, physical };

/// Normalized distance-to-enhancement weights in [0.1, 1].
struct DistanceMap {
  TensorND weights;
  bool inverted = false;
  SpacingMode spacing_mode = SpacingMode::voxel;
  /// Set for the all-false / all-true mask cases.
  std::string note;
};

inline constexpr double kDefaultCeThreshold = 20.0;
inline constexpr double kMinWeight = 0.1;
inline constexpr double kMaxWeight = 1.0;

/// Flags voxels whose mean post-baseline difference exceeds `threshold`.
///
/// The difference is I_t - I_baseline (enhancement raises intensity); with
/// `signed_reverse` it is I_baseline - I_t.
CEMask detect_ce(const VolumeSequence& seq, std::size_t baseline_index,
                 double threshold = kDefaultCeThreshold, bool signed_reverse = false);

/// Exact squared Euclidean distance from each voxel to the nearest nonzero
/// voxel of `mask`, computed one axis at a time with the lower envelope of
/// parabolas. Axis offsets are scaled by `spacing` (empty = unit spacing).
/// Voxels with no reachable feature get +infinity.
TensorND squared_distance_transform(const TensorND& mask, std::span<const double> spacing = {});

/// Raw Euclidean distances (square root of the above).
TensorND distance_transform(const TensorND& mask, std::span<const double> spacing = {});

/// Linear map of the raw distances onto [0.1, 1]; all-false masks give 1.0
/// everywhere and all-true masks give 0.1 everywhere.
DistanceMap distance_map(const CEMask& mask, std::span<const double> spacing_mm = {},
                         SpacingMode mode = SpacingMode::voxel);

/// w -> 1.1 - w. Throws ValidationError on an already inverted map.
DistanceMap invert_map(const DistanceMap& dm);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  /// Dynamic range L; when unset it is max - min of the reference argument.
  std::optional<double> dynamic_range;
  /// Treat a rank-3 input as a stack of 2D slices along axis 0 and average.
  bool per_slice = false;
};

/// Window actually used for an image: per-axis min(window, axis length),
/// rounded down to odd.
GaussianWindow ssim_window(const Shape& image_shape, const SsimParams& p);

/// max - min of `reference`, or 1 when the image is constant.
double auto_dynamic_range(const TensorND& reference);

/// Mean SSIM index and mean contrast-structure term over all window positions.
struct SsimTerms {
  double ssim = 0.0;
  double cs = 0.0;
};

SsimTerms ssim_terms(const TensorND& x, const TensorND& y, const GaussianWindow& window,
                     double dynamic_range, double k1, double k2);

/// Mean SSIM. L defaults to the range of `reference`.
double ssim(const TensorND& reference, const TensorND& test, const SsimParams& p = {});

/// Standard five-scale exponents, renormalized to sum to one.
std::vector<double> default_ms_ssim_weights();

struct MsSsimParams {
  SsimParams base;
  /// Number of scales. Unset = as many as the image allows (at most the
  /// number of weights), with the leading weights renormalized.
  std::optional<std::size_t> scales = 5;
  std::vector<double> weights = default_ms_ssim_weights();
};

struct MsSsimResult {
  double value = 0.0;
  std::size_t scales = 0;
};

/// Axes shorter than the window are "thin": never downsampled and not
/// counted towards the minimum-size requirement of window * 2^(scales-1).
MsSsimResult ms_ssim(const TensorND& reference, const TensorND& test, const MsSsimParams& p = {});

/// Largest scale count the image supports (0 if even one scale is impossible).
std::size_t max_ms_ssim_scales(const Shape& shape, std::size_t window);

enum class CwMode { content, style };

struct CwSsimResult {
  double value = 0.0;
  /// Non-empty when the map's inversion flag does not match `mode`.
  std::string warning;
};

/// SSIM(generated * w, reference * w). L is taken from the unweighted reference.
CwSsimResult cw_ssim(const TensorND& generated, const TensorND& reference, const DistanceMap& dm,
                     const SsimParams& p = {}, CwMode mode = CwMode::content);

struct PsnrResult {
  double db = 0.0;
  bool infinite = false;
};

PsnrResult psnr(const TensorND& reference, const TensorND& test, double peak);

enum class Direction { nce_to_ce, ce_to_nce };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

struct MetricReport {
  Direction direction = Direction::nce_to_ce;
  PsnrResult psnr_style_vs_gen;
  double ssim_content_vs_gen = 0.0;
  double ms_ssim_content_vs_gen = 0.0;
  std::size_t ms_ssim_scales = 0;
  double cw_ssim_content = 0.0;
  double cw_ssim_style = 0.0;
  double peak = 0.0;
  double dynamic_range_content = 0.0;
  double dynamic_range_style = 0.0;
  std::size_t ce_voxels = 0;
  std::vector<std::string> warnings;
};

struct EvalParams {
  double threshold = kDefaultCeThreshold;
  std::size_t baseline_index = 0;
  bool signed_reverse = false;
  SpacingMode spacing_mode = SpacingMode::voxel;
  SsimParams ssim;
  /// Unset = automatic scale count.
  std::optional<std::size_t> ms_scales;
  /// PSNR peak; unset = max - min of the style image.
  std::optional<double> peak;
  Direction direction = Direction::nce_to_ce;
};

/// PSNR(style, generated), SSIM/MS-SSIM(content, generated), content
/// CW-SSIM(generated, content, map) and style CW-SSIM(generated, style,
/// inverted map), with the map built from `seq_for_mask`.
MetricReport evaluate_triple(const TensorND& generated, const TensorND& content, const TensorND& style,
                             const VolumeSequence& seq_for_mask, const EvalParams& params = {});

/// Same, with a precomputed mask.
MetricReport evaluate_triple(const TensorND& generated, const TensorND& content, const TensorND& style,
                             const CEMask& mask, std::span<const double> spacing_mm,
                             const EvalParams& params = {});

/// 2|A∩B| / (|A|+|B|); 1 when both masks are empty.
double dice(const TensorND& a, const TensorND& b);

}  // namespace cwssim
