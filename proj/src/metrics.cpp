#include "cwssim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cwssim {

std::vector<double> VolumeSequence::spacing() const {
  const std::size_t spatial = frames.rank() - 1;
  if (spacing_mm.empty()) return std::vector<double>(spatial, 1.0);
  if (spacing_mm.size() != spatial)
    throw DimensionError("sequence spacing has " + std::to_string(spacing_mm.size()) +
                         " entries for " + std::to_string(spatial) + " spatial axes");
  return spacing_mm;
}

std::size_t CEMask::count() const {
  return static_cast<std::size_t>(
      std::count_if(mask.values().begin(), mask.values().end(), [](double v) { return v != 0.0; }));
}

// ---------------------------------------------------------------------------
// CE detection

CEMask detect_ce(const VolumeSequence& seq, std::size_t baseline_index, double threshold,
                 bool signed_reverse) {
  if (seq.frames.rank() < 2) throw DimensionError("sequence needs a time axis and spatial axes");
  const std::size_t frames = seq.frame_count();
  if (frames < 2) throw ValidationError("CE detection needs at least 2 frames, got " + std::to_string(frames));
  if (baseline_index >= frames)
    throw ValidationError("baseline index " + std::to_string(baseline_index) + " out of range for " +
                          std::to_string(frames) + " frames");
  if (!std::isfinite(threshold)) throw ValidationError("threshold must be finite");

  const Shape fs = seq.frame_shape();
  const std::size_t n = shape_product(fs);
  auto data = seq.frames.data();
  const double* base = data.data() + baseline_index * n;
  std::vector<double> mean_diff(n, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    if (t == baseline_index) continue;
    const double* cur = data.data() + t * n;
    for (std::size_t i = 0; i < n; ++i) mean_diff[i] += signed_reverse ? base[i] - cur[i] : cur[i] - base[i];
  }
  const double inv = 1.0 / static_cast<double>(frames - 1);

  CEMask out;
  out.mask = TensorND(fs);
  out.threshold_used = threshold;
  out.baseline_index = baseline_index;
  for (std::size_t i = 0; i < n; ++i) out.mask[i] = mean_diff[i] * inv > threshold ? 1.0 : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Distance transform

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Lower envelope of the parabolas w*(p-q)^2 + f(q) sampled at integer p.
void distance_1d(const std::vector<double>& f, std::vector<double>& d, double w,
                 std::vector<std::size_t>& v, std::vector<double>& z) {
  const std::size_t n = f.size();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::ptrdiff_t k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double fq = f[q] + w * static_cast<double>(q) * static_cast<double>(q);
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const auto vk = static_cast<double>(v[static_cast<std::size_t>(k)]);
      s = (fq - (f[v[static_cast<std::size_t>(k)]] + w * vk * vk)) / (2.0 * w * (static_cast<double>(q) - vk));
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  std::size_t j = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[j + 1] < static_cast<double>(q)) ++j;
    const double dq = static_cast<double>(q) - static_cast<double>(v[j]);
    d[q] = w * dq * dq + f[v[j]];
  }
}

}  // namespace

TensorND squared_distance_transform(const TensorND& mask, std::span<const double> spacing) {
  const std::size_t rank = mask.rank();
  if (!spacing.empty() && spacing.size() != rank)
    throw DimensionError("spacing has " + std::to_string(spacing.size()) + " entries for rank " +
                         std::to_string(rank));
  for (double s : spacing)
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("spacing must be positive and finite");

  TensorND out(mask.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] != 0.0 ? 0.0 : kInf;

  const Shape st = mask.strides();
  std::vector<double> f, d;
  std::vector<std::size_t> v;
  std::vector<double> z;
  for (std::size_t a = 0; a < rank; ++a) {
    const std::size_t len = mask.dim(a);
    const double w = spacing.empty() ? 1.0 : spacing[a] * spacing[a];
    const std::size_t stride = st[a];
    f.resize(len);
    d.resize(len);
    // Every line along axis a starts at a flat index whose axis-a coordinate is 0.
    for (std::size_t start = 0; start < out.size(); ++start) {
      if ((start / stride) % len != 0) continue;
      for (std::size_t i = 0; i < len; ++i) f[i] = out[start + i * stride];
      distance_1d(f, d, w, v, z);
      for (std::size_t i = 0; i < len; ++i) out[start + i * stride] = d[i];
    }
  }
  return out;
}

TensorND distance_transform(const TensorND& mask, std::span<const double> spacing) {
  TensorND d = squared_distance_transform(mask, spacing);
  for (auto& x : d.data()) x = std::sqrt(x);
  return d;
}

DistanceMap distance_map(const CEMask& mask, std::span<const double> spacing_mm, SpacingMode mode) {
  if (mask.mask.size() == 0) throw DimensionError("distance map of an empty mask tensor");
  DistanceMap dm;
  dm.spacing_mode = mode;
  const std::size_t n_ce = mask.count();
  if (n_ce == 0) {
    dm.weights = TensorND(mask.mask.shape(), kMaxWeight);
    dm.note = "no contrast-enhanced voxels; uniform weight 1.0";
    return dm;
  }
  if (n_ce == mask.mask.size()) {
    dm.weights = TensorND(mask.mask.shape(), kMinWeight);
    dm.note = "every voxel contrast-enhanced; uniform weight 0.1";
    return dm;
  }
  std::span<const double> spacing;
  if (mode == SpacingMode::physical) spacing = spacing_mm;
  TensorND d = distance_transform(mask.mask, spacing);
  const double dmax = reduce_all(d, ReduceOp::max);
  for (auto& x : d.data()) x = kMinWeight + (kMaxWeight - kMinWeight) * (x / dmax);
  dm.weights = std::move(d);
  return dm;
}

DistanceMap invert_map(const DistanceMap& dm) {
  if (dm.inverted) throw ValidationError("distance map is already inverted");
  DistanceMap out = dm;
  for (auto& w : out.weights.data()) w = (kMinWeight + kMaxWeight) - w;
  out.inverted = true;
  return out;
}

// ---------------------------------------------------------------------------
// SSIM family

GaussianWindow ssim_window(const Shape& image_shape, const SsimParams& p) {
  Shape sizes(image_shape.size());
  for (std::size_t a = 0; a < image_shape.size(); ++a) {
    std::size_t s = std::min(p.window, image_shape[a]);
    if (s % 2 == 0) --s;
    sizes[a] = s;
  }
  return GaussianWindow(sizes, p.sigma);
}

double auto_dynamic_range(const TensorND& reference) {
  const auto [lo, hi] = std::minmax_element(reference.values().begin(), reference.values().end());
  const double r = *hi - *lo;
  return r > 0.0 ? r : 1.0;
}

SsimTerms ssim_terms(const TensorND& x, const TensorND& y, const GaussianWindow& window,
                     double dynamic_range, double k1, double k2) {
  if (!(dynamic_range > 0.0)) throw ValidationError("SSIM dynamic range must be positive");
  const WindowedMoments m = windowed_moments(x, y, window);
  const double c1 = (k1 * dynamic_range) * (k1 * dynamic_range);
  const double c2 = (k2 * dynamic_range) * (k2 * dynamic_range);
  double sum_ssim = 0.0, sum_cs = 0.0;
  const std::size_t n = m.mu_x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double mx = m.mu_x[i], my = m.mu_y[i];
    const double l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    const double cs = (2.0 * m.cov_xy[i] + c2) / (m.var_x[i] + m.var_y[i] + c2);
    sum_ssim += l * cs;
    sum_cs += cs;
  }
  return {sum_ssim / static_cast<double>(n), sum_cs / static_cast<double>(n)};
}

double ssim(const TensorND& reference, const TensorND& test, const SsimParams& p) {
  require_same_shape(reference, test, "ssim");
  const double L = p.dynamic_range.value_or(auto_dynamic_range(reference));
  if (p.per_slice && reference.rank() == 3) {
    double acc = 0.0;
    for (std::size_t z = 0; z < reference.dim(0); ++z) {
      TensorND a = reference.slice(z), b = test.slice(z);
      acc += ssim_terms(a, b, ssim_window(a.shape(), p), L, p.k1, p.k2).ssim;
    }
    return acc / static_cast<double>(reference.dim(0));
  }
  return ssim_terms(reference, test, ssim_window(reference.shape(), p), L, p.k1, p.k2).ssim;
}

std::vector<double> default_ms_ssim_weights() {
  std::vector<double> w{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= s;
  return w;
}

std::size_t max_ms_ssim_scales(const Shape& shape, std::size_t window) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  bool any_full = false;
  for (auto len : shape) {
    if (len < window) continue;
    any_full = true;
    std::size_t s = 1;
    while (len >= window * (std::size_t{1} << s)) ++s;
    best = std::min(best, s);
  }
  return any_full ? best : 1;
}

namespace {

/// 2x average pooling along the axes flagged in `pool` (odd remainders dropped).
TensorND downsample(const TensorND& x, const std::vector<bool>& pool) {
  Shape os = x.shape();
  for (std::size_t a = 0; a < os.size(); ++a)
    if (pool[a]) os[a] /= 2;
  TensorND out(os);
  const Shape ist = x.strides();
  const Shape ost = out.strides();
  std::size_t taps = 1;
  for (bool b : pool) taps *= b ? 2 : 1;
  const double scale = 1.0 / static_cast<double>(taps);
  const std::size_t rank = os.size();
  for (std::size_t o = 0; o < out.size(); ++o) {
    double acc = 0.0;
    for (std::size_t t = 0; t < taps; ++t) {
      std::size_t bits = t, off = 0;
      for (std::size_t a = 0; a < rank; ++a) {
        std::size_t c = (o / ost[a]) % os[a];
        if (pool[a]) {
          c = 2 * c + (bits & 1u);
          bits >>= 1;
        }
        off += c * ist[a];
      }
      acc += x[off];
    }
    out[o] = acc * scale;
  }
  return out;
}

MsSsimResult ms_ssim_single(const TensorND& reference, const TensorND& test, const MsSsimParams& p,
                            double L) {
  const Shape& shape = reference.shape();
  const std::size_t available = max_ms_ssim_scales(shape, p.base.window);
  std::size_t scales = 0;
  if (p.scales) {
    scales = *p.scales;
    if (scales == 0 || scales > p.weights.size())
      throw ValidationError("MS-SSIM scale count must be in [1, " + std::to_string(p.weights.size()) + "]");
    if (scales > available) {
      const std::size_t need = p.base.window * (std::size_t{1} << (scales - 1));
      throw ValidationError("MS-SSIM with " + std::to_string(scales) + " scales needs at least " +
                            std::to_string(need) + " samples per axis, image is " + shape_to_string(shape));
    }
  } else {
    scales = std::min(available, p.weights.size());
  }
  std::vector<double> w(p.weights.begin(), p.weights.begin() + static_cast<std::ptrdiff_t>(scales));
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= wsum;

  std::vector<bool> pool(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a) pool[a] = shape[a] >= p.base.window;

  TensorND x = reference, y = test;
  double value = 1.0;
  for (std::size_t j = 0; j < scales; ++j) {
    const SsimTerms t = ssim_terms(x, y, ssim_window(x.shape(), p.base), L, p.base.k1, p.base.k2);
    const double term = j + 1 == scales ? t.ssim : t.cs;
    value *= std::pow(std::max(term, 0.0), w[j]);
    if (j + 1 < scales) {
      x = downsample(x, pool);
      y = downsample(y, pool);
    }
  }
  return {value, scales};
}

}  // namespace

MsSsimResult ms_ssim(const TensorND& reference, const TensorND& test, const MsSsimParams& p) {
  require_same_shape(reference, test, "ms_ssim");
  if (p.weights.empty()) throw ValidationError("MS-SSIM needs at least one weight");
  const double L = p.base.dynamic_range.value_or(auto_dynamic_range(reference));
  if (p.base.per_slice && reference.rank() == 3) {
    MsSsimResult acc{0.0, 0};
    for (std::size_t z = 0; z < reference.dim(0); ++z) {
      const MsSsimResult r = ms_ssim_single(reference.slice(z), test.slice(z), p, L);
      acc.value += r.value;
      acc.scales = r.scales;
    }
    acc.value /= static_cast<double>(reference.dim(0));
    return acc;
  }
  return ms_ssim_single(reference, test, p, L);
}

CwSsimResult cw_ssim(const TensorND& generated, const TensorND& reference, const DistanceMap& dm,
                     const SsimParams& p, CwMode mode) {
  require_same_shape(generated, reference, "cw_ssim");
  require_same_shape(reference, dm.weights, "cw_ssim weights");
  CwSsimResult r;
  if (mode == CwMode::content && dm.inverted)
    r.warning = "content CW-SSIM evaluated with an inverted distance map";
  else if (mode == CwMode::style && !dm.inverted)
    r.warning = "style CW-SSIM evaluated with a non-inverted distance map";
  SsimParams q = p;
  q.dynamic_range = p.dynamic_range.value_or(auto_dynamic_range(reference));
  r.value = ssim(hadamard(reference, dm.weights), hadamard(generated, dm.weights), q);
  return r;
}

PsnrResult psnr(const TensorND& reference, const TensorND& test, double peak) {
  require_same_shape(reference, test, "psnr");
  if (!(peak > 0.0) || !std::isfinite(peak)) throw ValidationError("PSNR peak must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - test[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(reference.size());
  if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {10.0 * std::log10(peak * peak / mse), false};
}

std::string to_string(Direction d) { return d == Direction::nce_to_ce ? "nce_to_ce" : "ce_to_nce"; }

Direction direction_from_string(const std::string& s) {
  if (s == "nce_to_ce") return Direction::nce_to_ce;
  if (s == "ce_to_nce") return Direction::ce_to_nce;
  throw ValidationError("unknown direction '" + s + "' (expected nce_to_ce or ce_to_nce)");
}

MetricReport evaluate_triple(const TensorND& generated, const TensorND& content, const TensorND& style,
                             const VolumeSequence& seq_for_mask, const EvalParams& params) {
  const CEMask mask = detect_ce(seq_for_mask, params.baseline_index, params.threshold, params.signed_reverse);
  const std::vector<double> spacing = seq_for_mask.spacing();
  return evaluate_triple(generated, content, style, mask, spacing, params);
}

MetricReport evaluate_triple(const TensorND& generated, const TensorND& content, const TensorND& style,
                             const CEMask& mask, std::span<const double> spacing_mm, const EvalParams& params) {
  require_same_shape(content, generated, "evaluate_triple (content vs generated)");
  require_same_shape(style, generated, "evaluate_triple (style vs generated)");
  require_same_shape(mask.mask, generated, "evaluate_triple (mask vs generated)");

  MetricReport r;
  r.direction = params.direction;
  r.ce_voxels = mask.count();

  const DistanceMap dm = distance_map(mask, spacing_mm, params.spacing_mode);
  const DistanceMap inv = invert_map(dm);
  if (!dm.note.empty()) r.warnings.push_back(dm.note);

  r.peak = params.peak.value_or(auto_dynamic_range(style));
  r.psnr_style_vs_gen = psnr(style, generated, r.peak);

  SsimParams content_params = params.ssim;
  content_params.dynamic_range = params.ssim.dynamic_range.value_or(auto_dynamic_range(content));
  SsimParams style_params = params.ssim;
  style_params.dynamic_range = params.ssim.dynamic_range.value_or(auto_dynamic_range(style));
  r.dynamic_range_content = *content_params.dynamic_range;
  r.dynamic_range_style = *style_params.dynamic_range;

  r.ssim_content_vs_gen = ssim(content, generated, content_params);
  MsSsimParams ms;
  ms.base = content_params;
  ms.scales = params.ms_scales;
  const MsSsimResult msr = ms_ssim(content, generated, ms);
  r.ms_ssim_content_vs_gen = msr.value;
  r.ms_ssim_scales = msr.scales;

  const CwSsimResult cwc = cw_ssim(generated, content, dm, content_params, CwMode::content);
  const CwSsimResult cws = cw_ssim(generated, style, inv, style_params, CwMode::style);
  r.cw_ssim_content = cwc.value;
  r.cw_ssim_style = cws.value;
  for (const auto* w : {&cwc.warning, &cws.warning})
    if (!w->empty()) r.warnings.push_back(*w);
  return r;
}

double dice(const TensorND& a, const TensorND& b) {
  require_same_shape(a, b, "dice");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0.0, y = b[i] != 0.0;
    na += x;
    nb += y;
    inter += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

}  // namespace cwssim
