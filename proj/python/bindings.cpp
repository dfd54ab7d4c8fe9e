#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cwssim/cli.hpp"
#include "cwssim/io.hpp"
#include "cwssim/metrics.hpp"
#include "cwssim/neural.hpp"
#include "cwssim/phantom.hpp"
#include "cwssim/report.hpp"

namespace py = pybind11;
using namespace cwssim;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

TensorND to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) shape.push_back(1);
  std::vector<double> data(a.data(), a.data() + a.size());
  return TensorND::from_external(std::move(shape), std::move(data));
}

Array to_array(const TensorND& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

SsimParams ssim_params(std::size_t window, double sigma, double k1, double k2, std::optional<double> dynamic_range,
                       bool per_slice) {
  SsimParams p;
  p.window = window;
  p.sigma = sigma;
  p.k1 = k1;
  p.k2 = k2;
  p.dynamic_range = dynamic_range;
  p.per_slice = per_slice;
  return p;
}

DistanceMap map_from(const Array& weights, bool inverted) {
  DistanceMap dm;
  dm.weights = to_tensor(weights);
  dm.inverted = inverted;
  return dm;
}

ConvLSTMWeights lstm_weights(const Array& kernel, const Array& bias) {
  const TensorND b = to_tensor(bias);
  return {to_tensor(kernel), std::vector<double>(b.values().begin(), b.values().end())};
}

}  // namespace

PYBIND11_MODULE(_cwssim, m) {
  m.doc() = "Contrast-weighted SSIM metrics, CE detection, distance maps, style-transfer kernels and phantoms.";
  m.attr("__version__") = kVersion;

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // Metrics -----------------------------------------------------------------
  m.def(
      "ssim",
      [](const Array& reference, const Array& test, std::size_t window, double sigma, double k1, double k2,
         std::optional<double> dynamic_range, bool per_slice) {
        return ssim(to_tensor(reference), to_tensor(test),
                    ssim_params(window, sigma, k1, k2, dynamic_range, per_slice));
      },
      py::arg("reference"), py::arg("test"), py::arg("window") = 11, py::arg("sigma") = 1.5, py::arg("k1") = 0.01,
      py::arg("k2") = 0.03, py::arg("dynamic_range") = py::none(), py::arg("per_slice") = false,
      "Mean SSIM; dynamic range defaults to max - min of the reference.");

  m.def(
      "ms_ssim",
      [](const Array& reference, const Array& test, std::optional<std::size_t> scales,
         std::optional<double> dynamic_range, bool per_slice) {
        MsSsimParams p;
        p.base.dynamic_range = dynamic_range;
        p.base.per_slice = per_slice;
        p.scales = scales;
        const MsSsimResult r = ms_ssim(to_tensor(reference), to_tensor(test), p);
        return py::make_tuple(r.value, r.scales);
      },
      py::arg("reference"), py::arg("test"), py::arg("scales") = 5, py::arg("dynamic_range") = py::none(),
      py::arg("per_slice") = false, "Returns (value, scales_used). scales=None picks the scale count automatically.");

  m.def(
      "cw_ssim",
      [](const Array& generated, const Array& reference, const Array& weights, bool inverted, const std::string& mode,
         std::optional<double> dynamic_range, bool per_slice) {
        if (mode != "content" && mode != "style") throw ValidationError("mode must be 'content' or 'style'");
        SsimParams p;
        p.dynamic_range = dynamic_range;
        p.per_slice = per_slice;
        const CwSsimResult r = cw_ssim(to_tensor(generated), to_tensor(reference), map_from(weights, inverted), p,
                                       mode == "content" ? CwMode::content : CwMode::style);
        return py::make_tuple(r.value, r.warning);
      },
      py::arg("generated"), py::arg("reference"), py::arg("weights"), py::arg("inverted") = false,
      py::arg("mode") = "content", py::arg("dynamic_range") = py::none(), py::arg("per_slice") = false,
      "Returns (value, warning).");

  m.def(
      "psnr",
      [](const Array& reference, const Array& test, double peak) {
        return psnr(to_tensor(reference), to_tensor(test), peak).db;
      },
      py::arg("reference"), py::arg("test"), py::arg("peak"));

  m.def(
      "detect_ce",
      [](const Array& seq, std::size_t baseline, double threshold, bool signed_reverse) {
        VolumeSequence s{to_tensor(seq), {}};
        return to_array(detect_ce(s, baseline, threshold, signed_reverse).mask);
      },
      py::arg("seq"), py::arg("baseline") = 0, py::arg("threshold") = kDefaultCeThreshold,
      py::arg("signed_reverse") = false);

  m.def(
      "distance_transform",
      [](const Array& mask, std::vector<double> spacing) { return to_array(distance_transform(to_tensor(mask), spacing)); },
      py::arg("mask"), py::arg("spacing") = std::vector<double>{});

  m.def(
      "distance_map",
      [](const Array& mask, std::vector<double> spacing, bool physical) {
        CEMask ce;
        ce.mask = to_tensor(mask);
        return to_array(distance_map(ce, spacing, physical ? SpacingMode::physical : SpacingMode::voxel).weights);
      },
      py::arg("mask"), py::arg("spacing") = std::vector<double>{}, py::arg("physical") = false);

  m.def(
      "invert_map", [](const Array& weights) { return to_array(invert_map(map_from(weights, false)).weights); },
      py::arg("weights"));

  m.def(
      "evaluate_triple",
      [](const Array& generated, const Array& content, const Array& style, const Array& seq,
         std::vector<double> spacing, double threshold, std::size_t baseline, const std::string& mode,
         std::optional<double> peak, const std::string& direction) {
        EvalParams p;
        p.threshold = threshold;
        p.baseline_index = baseline;
        p.ssim.per_slice = mode == "2d";
        p.peak = peak;
        p.ms_scales = std::nullopt;
        p.direction = direction_from_string(direction);
        VolumeSequence s{to_tensor(seq), spacing};
        return json_to_py(to_json(evaluate_triple(to_tensor(generated), to_tensor(content), to_tensor(style), s, p)));
      },
      py::arg("generated"), py::arg("content"), py::arg("style"), py::arg("seq"),
      py::arg("spacing") = std::vector<double>{}, py::arg("threshold") = kDefaultCeThreshold, py::arg("baseline") = 0,
      py::arg("mode") = "3d", py::arg("peak") = py::none(), py::arg("direction") = "nce_to_ce",
      "Full metric battery for one triple, returned as a dict.");

  // Neural kernels ----------------------------------------------------------
  m.def(
      "adain",
      [](const Array& content, const Array& style, double eps) {
        return to_array(adain(FeatureMap(to_tensor(content)), FeatureMap(to_tensor(style)), eps).tensor);
      },
      py::arg("content"), py::arg("style"), py::arg("eps") = 1e-5);

  m.def(
      "adaconv_apply",
      [](const Array& content, const Array& spatial, const Array& pointwise, const Array& bias, std::size_t groups) {
        AdaConvKernelSet k;
        k.spatial = to_tensor(spatial);
        k.pointwise = to_tensor(pointwise);
        const TensorND b = to_tensor(bias);
        k.bias.assign(b.values().begin(), b.values().end());
        k.groups = groups;
        return to_array(adaconv_apply(FeatureMap(to_tensor(content)), k).tensor);
      },
      py::arg("content"), py::arg("spatial"), py::arg("pointwise"), py::arg("bias"), py::arg("groups") = 1);

  m.def(
      "convlstm_cell",
      [](const Array& x, const Array& h, const Array& c, const Array& kernel, const Array& bias) {
        const ConvLSTMState s{FeatureMap(to_tensor(h)), FeatureMap(to_tensor(c))};
        const ConvLSTMState n = convlstm_cell(FeatureMap(to_tensor(x)), s, lstm_weights(kernel, bias));
        return py::make_tuple(to_array(n.h.tensor), to_array(n.c.tensor));
      },
      py::arg("x"), py::arg("h"), py::arg("c"), py::arg("kernel"), py::arg("bias"), "Returns (h_next, c_next).");

  m.def(
      "bidirectional_convlstm",
      [](const std::vector<Array>& seq, const Array& fw_kernel, const Array& fw_bias, const Array& bw_kernel,
         const Array& bw_bias) {
        std::vector<FeatureMap> frames;
        for (const auto& a : seq) frames.emplace_back(to_tensor(a));
        const auto out = bidirectional_convlstm(frames, lstm_weights(fw_kernel, fw_bias), lstm_weights(bw_kernel, bw_bias),
                                                frames.size());
        std::vector<Array> res;
        for (const auto& f : out) res.push_back(to_array(f.tensor));
        return res;
      },
      py::arg("seq"), py::arg("fw_kernel"), py::arg("fw_bias"), py::arg("bw_kernel"), py::arg("bw_bias"));

  m.def(
      "loss_feature",
      [](const Array& g, const Array& x, std::uint64_t extractor_seed) {
        const TensorND gt = to_tensor(g);
        return loss_feature(gt, to_tensor(x), FixedFeatureExtractor::make(extractor_seed, gt.rank()));
      },
      py::arg("g"), py::arg("x"), py::arg("extractor_seed") = 0);

  m.def(
      "loss_style_frob",
      [](const Array& g, const Array& y, std::uint64_t extractor_seed, bool normalized) {
        const TensorND gt = to_tensor(g);
        return loss_style_frob(gt, to_tensor(y), FixedFeatureExtractor::make(extractor_seed, gt.rank()),
                               normalized ? GramNorm::by_size : GramNorm::none);
      },
      py::arg("g"), py::arg("y"), py::arg("extractor_seed") = 0, py::arg("normalized") = true);

  m.def(
      "loss_l1", [](const Array& a, const Array& b) { return loss_l1(to_tensor(a), to_tensor(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "loss_adv_mse", [](const Array& scores, double target) { return loss_adv_mse(to_tensor(scores), target); },
      py::arg("scores"), py::arg("target"));

  m.def(
      "grad_check",
      [](const std::string& loss, std::uint64_t seed, std::vector<std::size_t> shape, std::size_t probes) {
        const LossId id = loss_from_string(loss);
        GradCheckOptions opt;
        opt.probes = probes;
        const GradCheckReport r = grad_check(id, make_gradcheck_inputs(id, seed, shape), seed, opt);
        py::dict d;
        d["loss"] = to_string(r.loss);
        d["max_rel_error"] = r.max_rel_error;
        d["probes"] = r.probes;
        d["ok"] = r.ok;
        d["failure"] = r.failure;
        return d;
      },
      py::arg("loss"), py::arg("seed") = 0, py::arg("shape") = std::vector<std::size_t>{8, 8}, py::arg("probes") = 64);

  // Phantom -----------------------------------------------------------------
  m.def(
      "generate_phantom",
      [](std::uint64_t seed, std::vector<std::size_t> shape, std::size_t frames, double noise, double motion,
         std::size_t enhancing, std::size_t content_frame, std::optional<std::size_t> style_frame) {
        RandomPhantomOptions opt;
        opt.frames = frames;
        opt.noise_sigma = noise;
        opt.motion = motion;
        opt.enhancing_regions = enhancing;
        const PhantomSpec spec = random_phantom_spec(seed, shape, opt);
        const PhantomOutput out = generate(spec);
        const PhantomTriple tr = make_triple(spec, content_frame, style_frame.value_or(frames - 1));
        py::dict d;
        d["sequence"] = to_array(out.sequence.frames);
        d["truth_mask"] = to_array(out.truth_mask.mask);
        d["content"] = to_array(tr.content);
        d["style"] = to_array(tr.style);
        d["generated"] = to_array(tr.generated_ideal);
        d["spec"] = json_to_py(to_json(spec));
        return d;
      },
      py::arg("seed") = 0, py::arg("shape") = std::vector<std::size_t>{64, 64}, py::arg("frames") = 5,
      py::arg("noise") = 0.0, py::arg("motion") = 0.0, py::arg("enhancing") = 2, py::arg("content_frame") = 0,
      py::arg("style_frame") = py::none());

  // Files and CLI -----------------------------------------------------------
  m.def(
      "read_tensor",
      [](const std::string& path) {
        const TensorFile f = read_tensor(path);
        return py::make_tuple(to_array(f.tensor), f.spacing_mm);
      },
      py::arg("path"), "Returns (array, spacing_mm).");
  m.def(
      "write_tensor",
      [](const std::string& path, const Array& a, std::vector<double> spacing) {
        write_tensor(path, to_tensor(a), spacing);
      },
      py::arg("path"), py::arg("array"), py::arg("spacing") = std::vector<double>{});

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "cwssim");
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line tool in-process; returns (exit_code, stdout, stderr).");
}
