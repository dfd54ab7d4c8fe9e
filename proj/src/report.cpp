#include "cwssim/report.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace cwssim {

using nlohmann::json;

const std::vector<std::string>& report_metric_keys() {
  static const std::vector<std::string> keys{"psnr_style_vs_gen", "ssim_content_vs_gen", "ms_ssim_content_vs_gen",
                                             "cw_ssim_content", "cw_ssim_style"};
  return keys;
}

json to_json(const MetricReport& r) {
  json j;
  j["direction"] = to_string(r.direction);
  j["psnr_style_vs_gen"] = r.psnr_style_vs_gen.infinite ? json(nullptr) : json(r.psnr_style_vs_gen.db);
  j["psnr_infinite"] = r.psnr_style_vs_gen.infinite;
  j["ssim_content_vs_gen"] = r.ssim_content_vs_gen;
  j["ms_ssim_content_vs_gen"] = r.ms_ssim_content_vs_gen;
  j["ms_ssim_scales"] = r.ms_ssim_scales;
  j["cw_ssim_content"] = r.cw_ssim_content;
  j["cw_ssim_style"] = r.cw_ssim_style;
  j["peak"] = r.peak;
  j["dynamic_range_content"] = r.dynamic_range_content;
  j["dynamic_range_style"] = r.dynamic_range_style;
  j["ce_voxels"] = r.ce_voxels;
  j["warnings"] = r.warnings;
  return j;
}

MetricReport metric_report_from_json(const json& j) {
  try {
    MetricReport r;
    r.direction = direction_from_string(j.at("direction").get<std::string>());
    r.psnr_style_vs_gen.infinite = j.value("psnr_infinite", false);
    r.psnr_style_vs_gen.db = r.psnr_style_vs_gen.infinite ? std::numeric_limits<double>::infinity()
                                                          : j.at("psnr_style_vs_gen").get<double>();
    r.ssim_content_vs_gen = j.at("ssim_content_vs_gen").get<double>();
    r.ms_ssim_content_vs_gen = j.at("ms_ssim_content_vs_gen").get<double>();
    r.ms_ssim_scales = j.value("ms_ssim_scales", std::size_t{0});
    r.cw_ssim_content = j.at("cw_ssim_content").get<double>();
    r.cw_ssim_style = j.at("cw_ssim_style").get<double>();
    r.peak = j.value("peak", 0.0);
    r.dynamic_range_content = j.value("dynamic_range_content", 0.0);
    r.dynamic_range_style = j.value("dynamic_range_style", 0.0);
    r.ce_voxels = j.value("ce_voxels", std::size_t{0});
    r.warnings = j.value("warnings", std::vector<std::string>{});
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report entry: ") + e.what());
  }
}

SummaryStats summarize(const std::vector<double>& values) {
  SummaryStats s;
  std::vector<double> finite;
  for (double v : values) {
    if (std::isinf(v))
      ++s.n_infinite;
    else
      finite.push_back(v);
  }
  s.n = finite.size();
  if (finite.empty()) return s;
  double sum = 0.0;
  for (double v : finite) sum += v;
  const double mean = sum / static_cast<double>(finite.size());
  s.mean = mean;
  if (finite.size() >= 2) {
    double ss = 0.0;
    for (double v : finite) ss += (v - mean) * (v - mean);
    s.std = std::sqrt(ss / static_cast<double>(finite.size() - 1));
  }
  return s;
}

namespace {

double metric_value(const MetricReport& r, const std::string& key) {
  if (key == "psnr_style_vs_gen") return r.psnr_style_vs_gen.db;
  if (key == "ssim_content_vs_gen") return r.ssim_content_vs_gen;
  if (key == "ms_ssim_content_vs_gen") return r.ms_ssim_content_vs_gen;
  if (key == "cw_ssim_content") return r.cw_ssim_content;
  return r.cw_ssim_style;
}

json stats_json(const SummaryStats& s) {
  return {{"n", s.n},
          {"n_infinite", s.n_infinite},
          {"mean", s.mean ? json(*s.mean) : json(nullptr)},
          {"std", s.std ? json(*s.std) : json(nullptr)}};
}

}  // namespace

json aggregate_reports(const std::vector<MetricReport>& reports) {
  std::map<std::string, std::vector<const MetricReport*>> by_dir;
  for (const auto& r : reports) by_dir[to_string(r.direction)].push_back(&r);
  json out = json::object();
  for (const auto& [dir, rs] : by_dir) {
    json d;
    d["count"] = rs.size();
    for (const auto& key : report_metric_keys()) {
      std::vector<double> vals;
      for (const auto* r : rs) vals.push_back(metric_value(*r, key));
      d[key] = stats_json(summarize(vals));
    }
    out[dir] = d;
  }
  return out;
}

json make_report(const json& entries, const json& provenance, const json& run_info) {
  if (!entries.is_array()) throw ValidationError("report entries must be an array");
  std::vector<MetricReport> parsed;
  for (const auto& e : entries) parsed.push_back(metric_report_from_json(e));
  json r;
  r["format"] = "cwssim-report";
  r["format_version"] = 1;
  r["provenance"] = provenance;
  r["entries"] = entries;
  r["aggregates"] = aggregate_reports(parsed);
  r["run_info"] = run_info;
  return r;
}

json merge_reports(const std::vector<json>& reports, const json& provenance, const json& run_info) {
  json entries = json::array();
  json sources = json::array();
  for (const auto& rep : reports) {
    if (!rep.is_object() || !rep.contains("entries")) throw ValidationError("input is not a metrics report");
    for (const auto& e : rep.at("entries")) entries.push_back(e);
    sources.push_back(rep.value("provenance", json::object()));
  }
  json prov = provenance;
  prov["merged_from"] = sources;
  return make_report(entries, prov, run_info);
}

std::string canonical_payload(const json& report) {
  json copy = report;
  copy.erase("run_info");
  return copy.dump(2) + "\n";
}

std::string report_to_csv(const json& report) {
  std::ostringstream os;
  os << std::setprecision(17);
  const auto& keys = report_metric_keys();
  os << "row,label,direction";
  for (const auto& k : keys) os << ',' << k;
  os << '\n';
  auto cell = [&](const json& v) {
    if (v.is_null())
      os << "";
    else
      os << v.get<double>();
  };
  std::size_t i = 0;
  for (const auto& e : report.at("entries")) {
    os << i++ << ',' << e.value("label", std::string{}) << ',' << e.at("direction").get<std::string>();
    for (const auto& k : keys) {
      os << ',';
      if (k == "psnr_style_vs_gen" && e.value("psnr_infinite", false))
        os << "inf";
      else
        cell(e.at(k));
    }
    os << '\n';
  }
  for (const auto& [dir, agg] : report.at("aggregates").items()) {
    for (const char* stat : {"mean", "std"}) {
      os << stat << ",," << dir;
      for (const auto& k : keys) {
        os << ',';
        cell(agg.at(k).at(stat));
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace cwssim
