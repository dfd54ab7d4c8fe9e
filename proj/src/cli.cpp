#include "cwssim/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cwssim/io.hpp"
#include "cwssim/metrics.hpp"
#include "cwssim/neural.hpp"
#include "cwssim/phantom.hpp"
#include "cwssim/report.hpp"

namespace cwssim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json provenance(const std::string& command, json parameters) {
  return {{"tool", "cwssim"}, {"version", kVersion}, {"command", command}, {"parameters", std::move(parameters)}};
}

/// File names only, so reruns in another directory give identical provenance.
std::string file_tag(const std::string& path) { return fs::path(path).filename().string(); }

std::optional<double> parse_auto_or_number(const std::string& s, const char* what) {
  if (s == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !(v > 0.0)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string(what) + " must be 'auto' or a positive number, got '" + s + "'");
  }
}

struct PhantomArgs {
  std::string out_dir;
  std::string spec_file;
  std::uint64_t seed = 0;
  std::vector<std::size_t> shape{64, 64};
  std::size_t frames = 5;
  double noise = 0.0;
  double motion = 0.0;
  bool rician = false;
  std::size_t enhancing = 2;
  double amp_min = 60.0;
  double amp_max = 120.0;
  std::size_t content_frame = 0;
  long style_frame = -1;
  std::vector<double> spacing;
};

struct CeArgs {
  std::string seq, out;
  double threshold = kDefaultCeThreshold;
  std::size_t baseline = 0;
  bool signed_reverse = false;
};

struct DistArgs {
  std::string mask, out;
  bool invert = false;
  bool physical = false;
  std::vector<double> spacing;
};

struct MetricArgs {
  std::string generated, content, style, seq, mask, out, csv, label;
  double threshold = kDefaultCeThreshold;
  std::size_t baseline = 0;
  std::string mode = "3d";
  std::string peak = "auto";
  std::string dynamic_range = "auto";
  std::string ms_scales = "auto";
  std::string direction = "nce_to_ce";
  bool physical = false;
  bool signed_reverse = false;
};

struct GradArgs {
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  std::size_t probes = 64;
  std::vector<std::size_t> shape{8, 8};
  std::string out;
};

struct MergeArgs {
  std::vector<std::string> inputs;
  std::string out, csv;
};

int cmd_phantom(const PhantomArgs& a, std::ostream& out) {
  PhantomSpec spec;
  if (!a.spec_file.empty()) {
    json j;
    try {
      j = json::parse(read_text(a.spec_file));
    } catch (const json::exception& e) {
      throw IoError("malformed phantom spec '" + a.spec_file + "': " + e.what());
    }
    spec = phantom_spec_from_json(j.contains("spec") ? j.at("spec") : j);
  } else {
    RandomPhantomOptions opt;
    opt.enhancing_regions = a.enhancing;
    opt.min_amplitude = a.amp_min;
    opt.max_amplitude = a.amp_max;
    opt.noise_sigma = a.noise;
    opt.frames = a.frames;
    opt.motion = a.motion;
    spec = random_phantom_spec(a.seed, a.shape, opt);
    spec.noise = a.rician ? NoiseModel::rician : NoiseModel::gaussian;
    spec.spacing_mm = a.spacing;
  }
  spec.validate();
  const std::size_t t_style = a.style_frame < 0 ? spec.frames - 1 : static_cast<std::size_t>(a.style_frame);

  const PhantomOutput ph = generate(spec);
  const PhantomTriple tr = make_triple(spec, a.content_frame, t_style);
  const json prov = provenance("phantom gen", {{"seed", spec.seed},
                                               {"content_frame", a.content_frame},
                                               {"style_frame", t_style},
                                               {"spec", a.spec_file.empty() ? json(nullptr) : json(file_tag(a.spec_file))}});
  const json extra = {{"provenance", prov}};
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_tensor(dir / "sequence.f32", ph.sequence.frames, spec.spacing_mm, extra);
  TensorND mask = ph.truth_mask.mask;
  mask.set_axis_labels(spec.grid.size() == 2 ? "YX" : "ZYX");
  write_tensor(dir / "truth_mask.f32", mask, spec.spacing_mm, extra);
  write_tensor(dir / "content.f32", tr.content, spec.spacing_mm, extra);
  write_tensor(dir / "style.f32", tr.style, spec.spacing_mm, extra);
  write_tensor(dir / "generated.f32", tr.generated_ideal, spec.spacing_mm, extra);
  json truth = {{"spec", to_json(spec)},
                {"truth_curves", ph.truth_curves},
                {"shifts", ph.shifts},
                {"truth_voxels", ph.truth_mask.count()},
                {"provenance", prov}};
  write_text(dir / "truth.json", truth.dump(2) + "\n");
  out << "wrote phantom (" << spec.frames << " frames, grid " << shape_to_string(spec.grid) << ") to " << dir.string()
      << "\n";
  return kExitOk;
}

int cmd_cemask(const CeArgs& a, std::ostream& out) {
  const TensorFile f = read_tensor(a.seq);
  VolumeSequence seq{f.tensor, f.spacing_mm};
  const CEMask m = detect_ce(seq, a.baseline, a.threshold, a.signed_reverse);
  TensorND mask = m.mask;
  mask.set_axis_labels(f.tensor.axis_labels().empty() ? std::string{} : f.tensor.axis_labels().substr(1));
  const json prov = provenance("cemask", {{"seq", file_tag(a.seq)},
                                          {"threshold", a.threshold},
                                          {"baseline", a.baseline},
                                          {"signed_reverse", a.signed_reverse}});
  write_tensor(a.out, mask, f.spacing_mm, {{"provenance", prov}, {"ce_voxels", m.count()}});
  out << "ce voxels: " << m.count() << " of " << mask.size() << "\n";
  return kExitOk;
}

int cmd_distmap(const DistArgs& a, std::ostream& out) {
  const TensorFile f = read_tensor(a.mask);
  CEMask m;
  m.mask = f.tensor;
  const std::vector<double> spacing = a.spacing.empty() ? f.spacing_mm : a.spacing;
  if (a.physical && spacing.empty()) throw ValidationError("--physical needs spacing (sidecar or --spacing)");
  DistanceMap dm = distance_map(m, spacing, a.physical ? SpacingMode::physical : SpacingMode::voxel);
  if (a.invert) dm = invert_map(dm);
  const json prov = provenance("distmap", {{"mask", file_tag(a.mask)}, {"invert", a.invert}, {"physical", a.physical}});
  json extra = {{"provenance", prov}, {"inverted", dm.inverted}};
  if (!dm.note.empty()) extra["note"] = dm.note;
  TensorND w = dm.weights;
  w.set_axis_labels(f.tensor.axis_labels());
  write_tensor(a.out, w, spacing, extra);
  if (!dm.note.empty()) out << dm.note << "\n";
  out << "wrote " << (dm.inverted ? "inverted " : "") << "distance map to " << a.out << "\n";
  return kExitOk;
}

int cmd_metrics(const MetricArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const TensorFile gen = read_tensor(a.generated);
  const TensorFile con = read_tensor(a.content);
  const TensorFile sty = read_tensor(a.style);
  if (a.mode != "2d" && a.mode != "3d") throw ValidationError("--mode must be 2d or 3d");

  EvalParams p;
  p.threshold = a.threshold;
  p.baseline_index = a.baseline;
  p.signed_reverse = a.signed_reverse;
  p.spacing_mode = a.physical ? SpacingMode::physical : SpacingMode::voxel;
  p.ssim.per_slice = a.mode == "2d";
  p.ssim.dynamic_range = parse_auto_or_number(a.dynamic_range, "--dynamic-range");
  p.peak = parse_auto_or_number(a.peak, "--peak");
  if (a.ms_scales != "auto") {
    const auto v = parse_auto_or_number(a.ms_scales, "--ms-scales");
    p.ms_scales = static_cast<std::size_t>(*v);
  }
  p.direction = direction_from_string(a.direction);

  MetricReport r;
  if (!a.mask.empty()) {
    const TensorFile mf = read_tensor(a.mask);
    if (a.physical && mf.spacing_mm.empty()) throw ValidationError("--physical needs spacing in the mask sidecar");
    CEMask m;
    m.mask = mf.tensor;
    r = evaluate_triple(gen.tensor, con.tensor, sty.tensor, m, mf.spacing_mm, p);
  } else {
    const TensorFile seqf = read_tensor(a.seq);
    VolumeSequence seq{seqf.tensor, seqf.spacing_mm};
    if (a.physical && seq.spacing_mm.empty()) throw ValidationError("--physical needs spacing in the sequence sidecar");
    r = evaluate_triple(gen.tensor, con.tensor, sty.tensor, seq, p);
  }

  json entry = to_json(r);
  entry["mode"] = a.mode;
  if (!a.label.empty()) entry["label"] = a.label;
  const json prov = provenance("metrics", {{"generated", file_tag(a.generated)},
                                           {"content", file_tag(a.content)},
                                           {"style", file_tag(a.style)},
                                           {"seq", a.seq.empty() ? json(nullptr) : json(file_tag(a.seq))},
                                           {"mask", a.mask.empty() ? json(nullptr) : json(file_tag(a.mask))},
                                           {"threshold", a.threshold},
                                           {"baseline", a.baseline},
                                           {"mode", a.mode},
                                           {"peak", a.peak},
                                           {"dynamic_range", a.dynamic_range},
                                           {"ms_scales", a.ms_scales},
                                           {"direction", a.direction},
                                           {"physical", a.physical},
                                           {"signed_reverse", a.signed_reverse}});
  const json report = make_report(json::array({entry}), prov, {{"timestamp", utc_timestamp()}, {"argv", argv}});
  if (a.out.empty())
    out << report.dump(2) << "\n";
  else
    write_text(a.out, report.dump(2) + "\n");
  if (!a.csv.empty()) write_text(a.csv, report_to_csv(report));
  return kExitOk;
}

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  json losses = json::object();
  bool all_ok = true;
  for (auto id : {LossId::l1, LossId::adv_mse, LossId::feature, LossId::style_frob}) {
    double worst = 0.0;
    std::size_t probes = 0;
    json failures = json::array();
    for (std::size_t k = 0; k < a.seeds; ++k) {
      const std::uint64_t s = a.seed + k;
      GradCheckOptions opt;
      opt.probes = a.probes;
      const GradCheckReport rep = grad_check(id, make_gradcheck_inputs(id, s, a.shape), s, opt);
      worst = std::max(worst, rep.max_rel_error);
      probes += rep.probes;
      if (!rep.ok) failures.push_back({{"seed", s}, {"failure", rep.failure}});
    }
    all_ok = all_ok && failures.empty();
    losses[to_string(id)] = {{"max_rel_error", worst}, {"probes", probes}, {"failures", failures}};
  }
  json doc = {{"provenance",
               provenance("gradcheck", {{"seed", a.seed}, {"seeds", a.seeds}, {"probes", a.probes}, {"shape", a.shape}})},
              {"step", GradCheckOptions{}.step},
              {"losses", losses},
              {"ok", all_ok}};
  if (a.out.empty())
    out << doc.dump(2) << "\n";
  else
    write_text(a.out, doc.dump(2) + "\n");
  return all_ok ? kExitOk : kExitValidation;
}

int cmd_merge(const MergeArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  std::vector<json> reports;
  json names = json::array();
  for (const auto& path : a.inputs) {
    try {
      reports.push_back(json::parse(read_text(path)));
    } catch (const json::exception& e) {
      throw IoError("malformed report '" + path + "': " + e.what());
    }
    names.push_back(file_tag(path));
  }
  const json merged =
      merge_reports(reports, provenance("report merge", {{"inputs", names}}), {{"timestamp", utc_timestamp()}, {"argv", argv}});
  if (a.out.empty())
    out << merged.dump(2) << "\n";
  else
    write_text(a.out, merged.dump(2) + "\n");
  if (!a.csv.empty()) write_text(a.csv, report_to_csv(merged));
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrast-weighted SSIM metrics, CE masks, distance maps and phantom tooling", "cwssim"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "Synthetic DCE phantom tools");
  phantom->require_subcommand(1);
  auto* gen = phantom->add_subcommand("gen", "Generate a phantom sequence, truth mask and content/style/generated triple");
  gen->add_option("--out", pa.out_dir, "Output directory")->required();
  gen->add_option("--spec", pa.spec_file, "Phantom spec JSON (truth.json or a bare spec); overrides random geometry");
  gen->add_option("--seed", pa.seed, "Random seed");
  gen->add_option("--shape", pa.shape, "Grid shape, e.g. 64,64 or 8,64,64")->delimiter(',');
  gen->add_option("--frames", pa.frames, "Number of frames");
  gen->add_option("--noise", pa.noise, "Noise sigma");
  gen->add_option("--motion", pa.motion, "Maximum per-frame translation in voxels");
  gen->add_flag("--rician", pa.rician, "Rician instead of Gaussian noise");
  gen->add_option("--enhancing", pa.enhancing, "Number of enhancing regions");
  gen->add_option("--amplitude-min", pa.amp_min, "Minimum enhancement amplitude");
  gen->add_option("--amplitude-max", pa.amp_max, "Maximum enhancement amplitude");
  gen->add_option("--content-frame", pa.content_frame, "Frame used as the content image");
  gen->add_option("--style-frame", pa.style_frame, "Frame used as the style image (-1 = last)");
  gen->add_option("--spacing", pa.spacing, "Voxel spacing in mm per axis")->delimiter(',');

  CeArgs ca;
  auto* cemask = app.add_subcommand("cemask", "Detect contrast-enhanced voxels in a sequence");
  cemask->add_option("--seq", ca.seq, "Sequence tensor (T, [Z,] Y, X)")->required();
  cemask->add_option("--out", ca.out, "Output mask tensor")->required();
  cemask->add_option("--threshold", ca.threshold, "Mean-difference threshold");
  cemask->add_option("--baseline", ca.baseline, "Index of the non-enhanced baseline frame");
  cemask->add_flag("--signed-reverse", ca.signed_reverse, "Use baseline - frame instead of frame - baseline");

  DistArgs da;
  auto* distmap = app.add_subcommand("distmap", "Normalized distance map from a CE mask");
  distmap->add_option("--mask", da.mask, "Mask tensor")->required();
  distmap->add_option("--out", da.out, "Output weight tensor")->required();
  distmap->add_flag("--invert", da.invert, "Write the inverted (style) map");
  distmap->add_flag("--physical", da.physical, "Scale axis offsets by voxel spacing");
  distmap->add_option("--spacing", da.spacing, "Spacing override in mm per axis")->delimiter(',');

  MetricArgs ma;
  auto* metrics = app.add_subcommand("metrics", "Evaluate PSNR, SSIM, MS-SSIM and content/style CW-SSIM for a triple");
  metrics->add_option("--generated", ma.generated, "Generated image")->required();
  metrics->add_option("--content", ma.content, "Content image")->required();
  metrics->add_option("--style", ma.style, "Style image")->required();
  auto* seq_opt = metrics->add_option("--seq", ma.seq, "Sequence used to detect CE voxels");
  auto* mask_opt = metrics->add_option("--mask", ma.mask, "Precomputed CE mask (instead of --seq)");
  seq_opt->excludes(mask_opt);
  metrics->callback([&] {
    if (ma.seq.empty() && ma.mask.empty()) throw CLI::RequiredError("--seq or --mask");
  });
  metrics->add_option("--threshold", ma.threshold, "CE threshold");
  metrics->add_option("--baseline", ma.baseline, "Baseline frame index");
  metrics->add_option("--mode", ma.mode, "3d (volumetric windows) or 2d (per slice)")->check(CLI::IsMember({"2d", "3d"}));
  metrics->add_option("--peak", ma.peak, "PSNR peak: auto (style max - min) or a value");
  metrics->add_option("--dynamic-range", ma.dynamic_range, "SSIM dynamic range: auto (reference max - min) or a value");
  metrics->add_option("--ms-scales", ma.ms_scales, "MS-SSIM scales: auto or 1..5");
  metrics->add_option("--direction", ma.direction, "nce_to_ce or ce_to_nce")
      ->check(CLI::IsMember({"nce_to_ce", "ce_to_nce"}));
  metrics->add_option("--label", ma.label, "Label stored with the entry");
  metrics->add_flag("--physical", ma.physical, "Physical-spacing distances");
  metrics->add_flag("--signed-reverse", ma.signed_reverse, "Use baseline - frame for CE detection");
  metrics->add_option("--out", ma.out, "Report JSON path (stdout if omitted)");
  metrics->add_option("--csv", ma.csv, "Also write a flattened CSV");

  GradArgs ga;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradients");
  gradcheck->add_option("--seed", ga.seed, "First seed");
  gradcheck->add_option("--seeds", ga.seeds, "Number of consecutive seeds");
  gradcheck->add_option("--probes", ga.probes, "Coordinates probed per check");
  gradcheck->add_option("--shape", ga.shape, "Image shape")->delimiter(',');
  gradcheck->add_option("--out", ga.out, "Report JSON path (stdout if omitted)");

  MergeArgs mg;
  auto* report = app.add_subcommand("report", "Report utilities");
  report->require_subcommand(1);
  auto* merge = report->add_subcommand("merge", "Merge reports and recompute mean/std aggregates");
  merge->add_option("inputs", mg.inputs, "Report files")->required();
  merge->add_option("--out", mg.out, "Merged report path (stdout if omitted)");
  merge->add_option("--csv", mg.csv, "Also write a flattened CSV");

  std::vector<const char*> cargs;
  for (const auto& s : args) cargs.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_phantom(pa, out);
    if (cemask->parsed()) return cmd_cemask(ca, out);
    if (distmap->parsed()) return cmd_distmap(da, out);
    if (metrics->parsed()) return cmd_metrics(ma, args, out);
    if (gradcheck->parsed()) return cmd_gradcheck(ga, out);
    if (merge->parsed()) return cmd_merge(mg, args, out);
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  err << app.help();
  return kExitValidation;
}

}  // namespace cwssim
