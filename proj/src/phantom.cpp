#include "cwssim/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "cwssim/rng.hpp"

namespace cwssim {

namespace {

constexpr std::uint64_t kShiftStream = 100;
constexpr std::uint64_t kNoiseStream = 1000;
constexpr std::uint64_t kStyleNoiseStream = 2000;

std::vector<double> coords_of(std::size_t flat, const Shape& shape) {
  std::vector<double> c(shape.size());
  for (std::size_t a = shape.size(); a-- > 0;) {
    c[a] = static_cast<double>(flat % shape[a]);
    flat /= shape[a];
  }
  return c;
}

/// Multilinear interpolation at `pos`, clamped to the grid.
double sample_linear(const TensorND& img, std::span<const double> pos, const Shape& strides) {
  const std::size_t rank = img.rank();
  std::vector<std::size_t> lo(rank);
  std::vector<double> frac(rank);
  for (std::size_t a = 0; a < rank; ++a) {
    const double maxc = static_cast<double>(img.dim(a) - 1);
    const double p = std::clamp(pos[a], 0.0, maxc);
    const double fl = std::floor(p);
    lo[a] = static_cast<std::size_t>(fl);
    frac[a] = p - fl;
  }
  double acc = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << rank); ++corner) {
    double w = 1.0;
    std::size_t off = 0;
    for (std::size_t a = 0; a < rank; ++a) {
      const bool up = (corner >> a) & 1u;
      std::size_t c = lo[a] + (up ? 1 : 0);
      if (c >= img.dim(a)) c = img.dim(a) - 1;
      w *= up ? frac[a] : 1.0 - frac[a];
      off += c * strides[a];
    }
    if (w != 0.0) acc += w * img[off];
  }
  return acc;
}

TensorND apply_shift(const TensorND& img, std::span<const double> shift) {
  if (std::all_of(shift.begin(), shift.end(), [](double s) { return s == 0.0; })) return img;
  TensorND out(img.shape());
  const Shape st = img.strides();
  for (std::size_t i = 0; i < img.size(); ++i) {
    std::vector<double> p = coords_of(i, img.shape());
    for (std::size_t a = 0; a < p.size(); ++a) p[a] -= shift[a];
    out[i] = sample_linear(img, p, st);
  }
  return out;
}

TensorND add_noise(TensorND clean, const PhantomSpec& spec, std::uint64_t stream_seed) {
  if (spec.noise_sigma == 0.0) return clean;
  Rng rng(stream_seed);
  for (auto& v : clean.data()) {
    const double n1 = spec.noise_sigma * rng.normal();
    if (spec.noise == NoiseModel::gaussian) {
      v += n1;
    } else {
      const double n2 = spec.noise_sigma * rng.normal();
      v = std::sqrt((v + n1) * (v + n1) + n2 * n2);
    }
  }
  return clean;
}

std::vector<double> frame_shift(const PhantomSpec& spec, std::size_t t) {
  std::vector<double> s(spec.grid.size(), 0.0);
  if (t == 0 || spec.motion == 0.0) return s;
  Rng rng(mix_seed(spec.seed, kShiftStream + t));
  for (auto& v : s) v = rng.uniform(-spec.motion, spec.motion);
  return s;
}

}  // namespace

double EnhancementCurve::shape(double t) const {
  if (t <= onset) return 0.0;
  const double tp = alpha / beta;
  const double r = (t - onset) / tp;
  return std::pow(r, alpha) * std::exp(alpha * (1.0 - r));
}

bool Region::contains(std::span<const double> point) const {
  double acc = 0.0;
  for (std::size_t a = 0; a < center.size(); ++a) {
    const double d = (point[a] - center[a]) / radii[a];
    acc += d * d;
  }
  return acc <= 1.0;
}

void PhantomSpec::validate() const {
  if (grid.size() != 2 && grid.size() != 3) throw ValidationError("phantom grid must be 2D or 3D");
  for (auto d : grid)
    if (d == 0) throw ValidationError("phantom grid axes must be positive");
  if (frames < 2) throw ValidationError("phantom needs at least 2 frames");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise sigma must be non-negative");
  if (!(motion >= 0.0)) throw ValidationError("motion amplitude must be non-negative");
  if (!(frame_interval > 0.0)) throw ValidationError("frame interval must be positive");
  if (!spacing_mm.empty() && spacing_mm.size() != grid.size())
    throw ValidationError("spacing must have one entry per grid axis");
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const auto& reg = regions[r];
    const std::string tag = "region " + std::to_string(r) + ": ";
    if (reg.center.size() != grid.size() || reg.radii.size() != grid.size())
      throw ValidationError(tag + "center/radii rank must match the grid");
    for (std::size_t a = 0; a < grid.size(); ++a) {
      if (!(reg.radii[a] > 0.0)) throw ValidationError(tag + "radii must be positive");
      if (reg.center[a] < 0.0 || reg.center[a] > static_cast<double>(grid[a] - 1))
        throw ValidationError(tag + "center lies outside the grid");
    }
    if (!(reg.curve.alpha > 0.0) || !(reg.curve.beta > 0.0))
      throw ValidationError(tag + "gamma-variate alpha and beta must be positive");
    if (reg.curve.onset < 0.0) throw ValidationError(tag + "onset must be non-negative");
  }
}

TensorND render_frame(const PhantomSpec& spec, double time, std::span<const double> shift) {
  TensorND img(spec.grid, spec.background);
  std::vector<double> enh(img.size(), 0.0);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const std::vector<double> p = coords_of(i, spec.grid);
    for (const auto& reg : spec.regions)
      if (reg.contains(p)) {
        img[i] = reg.baseline;
        enh[i] += reg.curve(time);
      }
  }
  for (std::size_t i = 0; i < img.size(); ++i) img[i] += enh[i];
  return apply_shift(img, shift);
}

PhantomOutput generate(const PhantomSpec& spec) {
  spec.validate();
  PhantomOutput out;
  std::vector<TensorND> frames;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    auto shift = frame_shift(spec, t);
    frames.push_back(add_noise(render_frame(spec, spec.frame_time(t), shift), spec,
                               mix_seed(spec.seed, kNoiseStream + t)));
    out.shifts.push_back(std::move(shift));
  }
  out.sequence.frames = TensorND::stack(frames);
  out.sequence.frames.set_axis_labels(spec.grid.size() == 2 ? "TYX" : "TZYX");
  out.sequence.spacing_mm = spec.spacing_mm;

  out.truth_mask.mask = TensorND(spec.grid);
  out.truth_mask.baseline_index = 0;
  for (std::size_t i = 0; i < out.truth_mask.mask.size(); ++i) {
    const std::vector<double> p = coords_of(i, spec.grid);
    for (const auto& reg : spec.regions)
      if (reg.curve.amplitude > 0.0 && reg.contains(p)) out.truth_mask.mask[i] = 1.0;
  }
  for (const auto& reg : spec.regions) {
    std::vector<double> curve;
    for (std::size_t t = 0; t < spec.frames; ++t) curve.push_back(reg.baseline + reg.curve(spec.frame_time(t)));
    out.truth_curves.push_back(std::move(curve));
  }
  return out;
}

PhantomTriple make_triple(const PhantomSpec& spec, std::size_t t_content, std::size_t t_style) {
  spec.validate();
  if (t_content >= spec.frames || t_style >= spec.frames)
    throw ValidationError("triple frame index out of range for " + std::to_string(spec.frames) + " frames");
  const auto shift_c = frame_shift(spec, t_content);
  const auto shift_s = frame_shift(spec, t_style);
  const std::uint64_t content_noise = mix_seed(spec.seed, kNoiseStream + t_content);
  PhantomTriple tr;
  tr.content = add_noise(render_frame(spec, spec.frame_time(t_content), shift_c), spec, content_noise);
  tr.style = add_noise(render_frame(spec, spec.frame_time(t_style), shift_s), spec,
                       mix_seed(spec.seed, kStyleNoiseStream + t_style));
  tr.generated_ideal = add_noise(render_frame(spec, spec.frame_time(t_style), shift_c), spec, content_noise);
  return tr;
}

PhantomSpec random_phantom_spec(std::uint64_t seed, const Shape& grid, const RandomPhantomOptions& opt) {
  Rng rng(mix_seed(seed, 7));
  PhantomSpec spec;
  spec.grid = grid;
  spec.seed = seed;
  spec.frames = opt.frames;
  spec.noise_sigma = opt.noise_sigma;
  spec.motion = opt.motion;
  spec.background = 50.0;

  Region body;
  for (auto d : grid) {
    const double n = static_cast<double>(d);
    body.center.push_back((n - 1.0) / 2.0 + rng.uniform(-0.05, 0.05) * n);
    body.radii.push_back(n * rng.uniform(0.35, 0.45));
  }
  body.baseline = 200.0;
  spec.regions.push_back(body);

  // Non-enhancing structure for texture.
  Region organ;
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const double n = static_cast<double>(grid[a]);
    organ.center.push_back(body.center[a] + rng.uniform(-0.2, 0.2) * n);
    organ.radii.push_back(std::max(1.0, n * rng.uniform(0.08, 0.15)));
  }
  organ.baseline = rng.uniform(260.0, 320.0);
  spec.regions.push_back(organ);

  for (std::size_t k = 0; k < opt.enhancing_regions; ++k) {
    Region lesion;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const double n = static_cast<double>(grid[a]);
      lesion.center.push_back(std::clamp(body.center[a] + rng.uniform(-0.25, 0.25) * n, 0.0, n - 1.0));
      lesion.radii.push_back(std::max(1.0, n * rng.uniform(0.06, 0.12)));
    }
    lesion.baseline = rng.uniform(150.0, 250.0);
    lesion.curve.amplitude = rng.uniform(opt.min_amplitude, opt.max_amplitude);
    lesion.curve.onset = rng.uniform(0.0, 0.5) * spec.frame_interval;
    lesion.curve.alpha = rng.uniform(2.0, 4.0);
    lesion.curve.beta = rng.uniform(1.0, 2.0);
    spec.regions.push_back(lesion);
  }
  return spec;
}

}  // namespace cwssim
