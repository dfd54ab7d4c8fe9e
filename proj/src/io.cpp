#include "cwssim/io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace cwssim {

namespace fs = std::filesystem;
using nlohmann::json;

std::filesystem::path sidecar_path(const fs::path& payload) {
  fs::path p = payload;
  p += ".json";
  return p;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_tensor(const fs::path& path, const TensorND& t, const std::vector<double>& spacing_mm,
                  const json& extra) {
  std::string bytes;
  bytes.resize(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(t[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((u >> (8 * b)) & 0xffu);
  }
  write_text(path, bytes);

  json h = extra.is_object() ? extra : json::object();
  h["dims"] = t.shape();
  h["axis_order"] = t.axis_labels();
  h["dtype"] = "f32";
  if (!spacing_mm.empty()) h["spacing_mm"] = spacing_mm;
  write_text(sidecar_path(path), h.dump(2) + "\n");
}

TensorFile read_tensor(const fs::path& path) {
  TensorFile tf;
  const fs::path side = sidecar_path(path);
  try {
    tf.header = json::parse(read_text(side));
  } catch (const json::exception& e) {
    throw IoError("malformed header '" + side.string() + "': " + e.what());
  }
  Shape dims;
  std::string axis_order;
  try {
    if (tf.header.value("dtype", std::string("f32")) != "f32")
      throw IoError("unsupported dtype in '" + side.string() + "' (only f32)");
    dims = tf.header.at("dims").get<Shape>();
    axis_order = tf.header.value("axis_order", std::string{});
    if (tf.header.contains("spacing_mm")) tf.spacing_mm = tf.header.at("spacing_mm").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw IoError("bad header fields in '" + side.string() + "': " + e.what());
  }
  if (dims.empty()) throw IoError("header '" + side.string() + "' has no dims");
  for (auto d : dims)
    if (d == 0) throw IoError("header '" + side.string() + "' has a zero-length axis");

  const std::string bytes = read_text(path);
  const std::size_t n = shape_product(dims);
  if (bytes.size() != 4 * n)
    throw IoError("payload '" + path.string() + "' has " + std::to_string(bytes.size()) + " bytes, expected " +
                  std::to_string(4 * n) + " for dims " + shape_to_string(dims));
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)]))
           << (8 * b);
    const float f = std::bit_cast<float>(u);
    if (!std::isfinite(f))
      throw ValidationError("non-finite value in '" + path.string() + "' at byte offset " + std::to_string(i * 4));
    data[i] = static_cast<double>(f);
  }
  if (!axis_order.empty() && axis_order.size() != dims.size())
    throw IoError("axis_order '" + axis_order + "' does not match " + std::to_string(dims.size()) + " dims");
  tf.tensor = TensorND(dims, std::move(data), axis_order);
  return tf;
}

// ---------------------------------------------------------------------------
// PGM

namespace {

/// Reads the next whitespace-delimited token, skipping '#' comments.
std::string pgm_token(const std::string& s, std::size_t& pos) {
  while (pos < s.size()) {
    const char c = s[pos];
    if (c == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  return s.substr(start, pos - start);
}

std::size_t pgm_number(const std::string& s, std::size_t& pos, const fs::path& path) {
  const std::string tok = pgm_token(s, pos);
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError("bad PGM header field '" + tok + "' in '" + path.string() + "'");
  }
}

}  // namespace

TensorND read_pgm(const fs::path& path) {
  const std::string s = read_text(path);
  std::size_t pos = 0;
  const std::string magic = pgm_token(s, pos);
  if (magic != "P5" && magic != "P2") throw IoError("'" + path.string() + "' is not a PGM file");
  const std::size_t w = pgm_number(s, pos, path);
  const std::size_t h = pgm_number(s, pos, path);
  const std::size_t maxval = pgm_number(s, pos, path);
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw IoError("bad PGM geometry in '" + path.string() + "'");
  std::vector<double> data(w * h);
  if (magic == "P2") {
    for (auto& v : data) v = static_cast<double>(pgm_number(s, pos, path));
  } else {
    ++pos;  // single whitespace byte after maxval
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (s.size() < pos + data.size() * bps)
      throw IoError("PGM payload of '" + path.string() + "' has " + std::to_string(s.size() - std::min(pos, s.size())) +
                    " bytes, expected " + std::to_string(data.size() * bps));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto hi = static_cast<unsigned char>(s[pos + i * bps]);
      data[i] = bps == 1 ? hi : static_cast<double>((hi << 8) | static_cast<unsigned char>(s[pos + i * bps + 1]));
    }
  }
  return TensorND({h, w}, std::move(data), "YX");
}

// ---------------------------------------------------------------------------
// Phantom spec

json to_json(const PhantomSpec& spec) {
  json regions = json::array();
  for (const auto& r : spec.regions) {
    regions.push_back({{"center", r.center},
                       {"radii", r.radii},
                       {"baseline", r.baseline},
                       {"curve",
                        {{"amplitude", r.curve.amplitude},
                         {"onset", r.curve.onset},
                         {"alpha", r.curve.alpha},
                         {"beta", r.curve.beta}}}});
  }
  json j = {{"grid", spec.grid},
            {"background", spec.background},
            {"regions", regions},
            {"frames", spec.frames},
            {"frame_interval", spec.frame_interval},
            {"noise_sigma", spec.noise_sigma},
            {"noise", spec.noise == NoiseModel::gaussian ? "gaussian" : "rician"},
            {"motion", spec.motion},
            {"seed", spec.seed}};
  if (!spec.spacing_mm.empty()) j["spacing_mm"] = spec.spacing_mm;
  return j;
}

PhantomSpec phantom_spec_from_json(const json& j) {
  try {
    PhantomSpec s;
    s.grid = j.at("grid").get<Shape>();
    s.background = j.value("background", s.background);
    s.frames = j.value("frames", s.frames);
    s.frame_interval = j.value("frame_interval", s.frame_interval);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    const std::string noise = j.value("noise", std::string("gaussian"));
    if (noise != "gaussian" && noise != "rician") throw ValidationError("noise must be gaussian or rician");
    s.noise = noise == "gaussian" ? NoiseModel::gaussian : NoiseModel::rician;
    s.motion = j.value("motion", s.motion);
    s.seed = j.value("seed", s.seed);
    if (j.contains("spacing_mm")) s.spacing_mm = j.at("spacing_mm").get<std::vector<double>>();
    for (const auto& r : j.value("regions", json::array())) {
      Region reg;
      reg.center = r.at("center").get<std::vector<double>>();
      reg.radii = r.at("radii").get<std::vector<double>>();
      reg.baseline = r.value("baseline", 0.0);
      if (r.contains("curve")) {
        const auto& c = r.at("curve");
        reg.curve.amplitude = c.value("amplitude", 0.0);
        reg.curve.onset = c.value("onset", 0.0);
        reg.curve.alpha = c.value("alpha", reg.curve.alpha);
        reg.curve.beta = c.value("beta", reg.curve.beta);
      }
      s.regions.push_back(std::move(reg));
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad phantom spec: ") + e.what());
  }
}

}  // namespace cwssim
