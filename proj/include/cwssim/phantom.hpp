#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cwssim/metrics.hpp"
#include "cwssim/tensor.hpp"

namespace cwssim {

/// Gamma-variate bolus curve, peak value 1 at onset + alpha/beta:
///   g(t) = ((t - t0)/tp)^alpha * exp(alpha * (1 - (t - t0)/tp)),  tp = alpha/beta,
/// and zero before the onset.
struct EnhancementCurve {
  double amplitude = 0.0;
  double onset = 0.0;
  double alpha = 3.0;
  double beta = 1.5;

  double shape(double t) const;
  double operator()(double t) const { return amplitude * shape(t); }
  double peak_time() const { return onset + alpha / beta; }
};

/// Ellipse (2D) or ellipsoid (3D) in voxel coordinates.
struct Region {
  std::vector<double> center;
  std::vector<double> radii;
  double baseline = 0.0;
  EnhancementCurve curve;

  bool contains(std::span<const double> point) const;
};

enum class NoiseModel { gaussian, rician };

struct PhantomSpec {
  Shape grid{64, 64};
  double background = 100.0;
  /// Painted in order; later regions overwrite earlier baselines. Enhancement adds up.
  std::vector<Region> regions;
  std::size_t frames = 5;
  double frame_interval = 1.0;
  double noise_sigma = 0.0;
  NoiseModel noise = NoiseModel::gaussian;
  /// Maximum rigid translation per axis in voxels (frame 0 never moves).
  double motion = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> spacing_mm;

  void validate() const;
  double frame_time(std::size_t t) const { return static_cast<double>(t) * frame_interval; }
};

struct PhantomOutput {
  VolumeSequence sequence;
  /// Union of regions with positive amplitude (unshifted geometry).
  CEMask truth_mask;
  /// truth_curves[r][t] = region baseline + enhancement at frame t.
  std::vector<std::vector<double>> truth_curves;
  /// Per-frame translation in voxels.
  std::vector<std::vector<double>> shifts;
};

PhantomOutput generate(const PhantomSpec& spec);

struct PhantomTriple {
  TensorND content;
  TensorND style;
  /// Content geometry and noise, style enhancement state.
  TensorND generated_ideal;
};

/// content = frame t_content; style = frame t_style with an independent noise
/// draw; generated_ideal = the content frame re-rendered at the style frame's
/// enhancement level.
PhantomTriple make_triple(const PhantomSpec& spec, std::size_t t_content, std::size_t t_style);

/// Noise-free frame at time index `t` translated by `shift`.
TensorND render_frame(const PhantomSpec& spec, double time, std::span<const double> shift);

struct RandomPhantomOptions {
  std::size_t enhancing_regions = 2;
  double min_amplitude = 60.0;
  double max_amplitude = 120.0;
  double noise_sigma = 0.0;
  std::size_t frames = 5;
  double motion = 0.0;
};

/// A body ellipse with randomly placed enhancing lesions; geometry depends only on `seed`.
PhantomSpec random_phantom_spec(std::uint64_t seed, const Shape& grid, const RandomPhantomOptions& opt = {});

}  // namespace cwssim
