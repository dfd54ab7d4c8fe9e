#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include <unistd.h>

#include "cwssim/io.hpp"
#include "cwssim/report.hpp"
#include "oracles.hpp"

using namespace cwssim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cwssim_io_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

MetricReport sample_report(double v, Direction d = Direction::nce_to_ce) {
  MetricReport r;
  r.direction = d;
  r.psnr_style_vs_gen = {20.0 + v, false};
  r.ssim_content_vs_gen = 0.5 + v / 100;
  r.ms_ssim_content_vs_gen = 0.6 + v / 100;
  r.ms_ssim_scales = 3;
  r.cw_ssim_content = 0.7 + v / 100;
  r.cw_ssim_style = 0.8 + v / 100;
  r.peak = 255;
  r.dynamic_range_content = 200;
  r.dynamic_range_style = 210;
  r.ce_voxels = 12;
  return r;
}

}  // namespace

TEST_CASE("tensor round trip through f32") {
  TempDir tmp;
  Rng rng(1);
  TensorND t = oracle::random_tensor(rng, {3, 4, 5}, -100, 100);
  t.set_axis_labels("ZYX");
  const fs::path p = tmp.path / "sub" / "vol.f32";
  write_tensor(p, t, {2.0, 0.5, 0.5}, {{"provenance", {{"tool", "x"}}}});
  CHECK(fs::file_size(p) == 60 * 4);
  const TensorFile f = read_tensor(p);
  CHECK(f.tensor.shape() == t.shape());
  CHECK(f.tensor.axis_labels() == "ZYX");
  CHECK(f.spacing_mm == std::vector<double>{2.0, 0.5, 0.5});
  CHECK(f.header["provenance"]["tool"] == "x");
  CHECK(f.header["dtype"] == "f32");
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(f.tensor[i] == static_cast<double>(static_cast<float>(t[i])));
}

TEST_CASE("payload is little-endian f32") {
  TempDir tmp;
  const fs::path p = tmp.path / "one.f32";
  write_tensor(p, TensorND({2}, std::vector<double>{1.0, -2.5}));
  std::ifstream in(p, std::ios::binary);
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  // 1.0f = 0x3f800000, -2.5f = 0xc0200000
  CHECK(b[0] == 0x00);
  CHECK(b[3] == 0x3f);
  CHECK(b[2] == 0x80);
  CHECK(b[7] == 0xc0);
  CHECK(b[6] == 0x20);
}

TEST_CASE("read errors") {
  TempDir tmp;
  const fs::path p = tmp.path / "t.f32";
  write_tensor(p, TensorND({4, 4}, 1.0));

  // Truncated payload.
  write_bytes(p, std::string(60, '\0'));
  try {
    read_tensor(p);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("60 bytes") != std::string::npos);
    CHECK(msg.find("expected 64") != std::string::npos);
  }

  // NaN at element 5.
  std::string bytes(64, '\0');
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + 20, &nan, 4);
  write_bytes(p, bytes);
  try {
    read_tensor(p);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("byte offset 20") != std::string::npos);
  }

  write_bytes(p, std::string(64, '\0'));
  write_bytes(sidecar_path(p), "{\"dims\": [4, 4], \"dtype\": \"f64\"}");
  CHECK_THROWS_AS(read_tensor(p), IoError);
  write_bytes(sidecar_path(p), "{\"dims\": [4, 4");
  CHECK_THROWS_AS(read_tensor(p), IoError);
  write_bytes(sidecar_path(p), "{\"dims\": [4, 4], \"axis_order\": \"ZYX\"}");
  CHECK_THROWS_AS(read_tensor(p), IoError);
  CHECK_THROWS_AS(read_tensor(tmp.path / "missing.f32"), IoError);
}

TEST_CASE("16-bit and 8-bit PGM") {
  TempDir tmp;
  // 4x4, maxval 4095, big-endian samples, direct cast.
  std::string pgm = "P5\n# comment\n4 4\n4095\n";
  for (int i = 0; i < 16; ++i) {
    const int v = i * 250;
    pgm.push_back(static_cast<char>(v >> 8));
    pgm.push_back(static_cast<char>(v & 0xff));
  }
  write_bytes(tmp.path / "a.pgm", pgm);
  const TensorND a = read_pgm(tmp.path / "a.pgm");
  CHECK(a.shape() == Shape{4, 4});
  CHECK(a.axis_labels() == "YX");
  CHECK(a.at({0, 1}) == 250.0);
  CHECK(a.at({3, 3}) == 3750.0);

  write_bytes(tmp.path / "b.pgm", "P2\n3 2\n255\n0 1 2\n3 4 255\n");
  const TensorND b = read_pgm(tmp.path / "b.pgm");
  CHECK(b.shape() == Shape{2, 3});
  CHECK(b.values() == std::vector<double>{0, 1, 2, 3, 4, 255});

  write_bytes(tmp.path / "c.pgm", "P5\n4 4\n255\nabc");
  CHECK_THROWS_AS(read_pgm(tmp.path / "c.pgm"), IoError);
  write_bytes(tmp.path / "d.pgm", "P6\n1 1\n255\nabc");
  CHECK_THROWS_AS(read_pgm(tmp.path / "d.pgm"), IoError);
}

TEST_CASE("phantom spec json round trip") {
  const PhantomSpec s = random_phantom_spec(3, {20, 24});
  const PhantomSpec r = phantom_spec_from_json(to_json(s));
  CHECK(to_json(r) == to_json(s));
  CHECK(generate(r).sequence.frames == generate(s).sequence.frames);
  CHECK_THROWS_AS(phantom_spec_from_json(json{{"grid", {8, 8}}, {"noise", "poisson"}}), ValidationError);
  CHECK_THROWS_AS(phantom_spec_from_json(json{{"frames", 3}}), ValidationError);
}

TEST_CASE("metric report json") {
  MetricReport r = sample_report(1.0);
  r.warnings = {"w"};
  const json j = to_json(r);
  const MetricReport back = metric_report_from_json(j);
  CHECK(to_json(back) == j);

  r.psnr_style_vs_gen = {std::numeric_limits<double>::infinity(), true};
  const json ji = to_json(r);
  CHECK(ji["psnr_style_vs_gen"].is_null());
  CHECK(ji["psnr_infinite"] == true);
  CHECK(metric_report_from_json(ji).psnr_style_vs_gen.infinite);
}

TEST_CASE("summary statistics") {
  const SummaryStats s = summarize({1.0, 2.0, 4.0, std::numeric_limits<double>::infinity()});
  CHECK(s.n == 3);
  CHECK(s.n_infinite == 1);
  CHECK(*s.mean == doctest::Approx(7.0 / 3.0));
  const double m = 7.0 / 3.0;
  CHECK(*s.std == doctest::Approx(std::sqrt(((1 - m) * (1 - m) + (2 - m) * (2 - m) + (4 - m) * (4 - m)) / 2.0)));
  const SummaryStats one = summarize({5.0});
  CHECK(one.n == 1);
  CHECK(*one.mean == 5.0);
  CHECK_FALSE(one.std.has_value());
  CHECK_FALSE(summarize({}).mean.has_value());
}

TEST_CASE("aggregation, merge and csv") {
  std::vector<MetricReport> reps{sample_report(1), sample_report(3), sample_report(8),
                                 sample_report(2, Direction::ce_to_nce)};
  reps[1].psnr_style_vs_gen = {std::numeric_limits<double>::infinity(), true};

  json e1 = json::array(), e2 = json::array();
  e1.push_back(to_json(reps[0]));
  e1.push_back(to_json(reps[1]));
  e2.push_back(to_json(reps[2]));
  e2.push_back(to_json(reps[3]));
  const json a = make_report(e1, {{"tool", "t"}}, {{"timestamp", "x"}});
  const json b = make_report(e2, {{"tool", "t"}}, {{"timestamp", "y"}});
  CHECK(a["format"] == "cwssim-report");
  const json m = merge_reports({a, b}, {{"tool", "t"}});
  CHECK(m["entries"].size() == 4);
  CHECK(m["provenance"].contains("merged_from"));

  // Independent aggregation over the nce_to_ce entries.
  const json& agg = m["aggregates"]["nce_to_ce"];
  CHECK(agg["count"] == 3);
  const double c1 = 0.71, c3 = 0.73, c8 = 0.78;
  const double mean = (c1 + c3 + c8) / 3.0;
  const double sd = std::sqrt(((c1 - mean) * (c1 - mean) + (c3 - mean) * (c3 - mean) + (c8 - mean) * (c8 - mean)) / 2.0);
  CHECK(agg["cw_ssim_content"]["mean"].get<double>() == doctest::Approx(mean));
  CHECK(agg["cw_ssim_content"]["std"].get<double>() == doctest::Approx(sd));
  CHECK(agg["psnr_style_vs_gen"]["n"] == 2);
  CHECK(agg["psnr_style_vs_gen"]["n_infinite"] == 1);
  CHECK(agg["psnr_style_vs_gen"]["mean"].get<double>() == doctest::Approx(24.5));
  CHECK(m["aggregates"]["ce_to_nce"]["count"] == 1);
  CHECK(m["aggregates"]["ce_to_nce"]["ssim_content_vs_gen"]["std"].is_null());

  // Canonical payload ignores run_info.
  json a2 = a;
  a2["run_info"] = {{"timestamp", "later"}};
  CHECK(canonical_payload(a) == canonical_payload(a2));
  CHECK(canonical_payload(a).find("run_info") == std::string::npos);

  const std::string csv = report_to_csv(m);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 1 + 4 + 2 * 2);  // header, entries, mean/std per direction
  CHECK(csv.find("mean") != std::string::npos);
}
