#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwssim/metrics.hpp"
#include "cwssim/phantom.hpp"
#include "cwssim/tensor.hpp"

namespace cwssim {

/// Missing, unreadable, truncated or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor file is a raw little-endian f32 payload at `path` plus a JSON
/// sidecar at `path + ".json"`:
///   {"dims": [...], "axis_order": "TZYX", "dtype": "f32", "spacing_mm": [...]}
/// Extra sidecar keys (e.g. "provenance") are preserved on read.
struct TensorFile {
  TensorND tensor;
  std::vector<double> spacing_mm;
  nlohmann::json header;
};

std::filesystem::path sidecar_path(const std::filesystem::path& payload);

void write_tensor(const std::filesystem::path& path, const TensorND& t, const std::vector<double>& spacing_mm = {},
                  const nlohmann::json& extra = nlohmann::json::object());
TensorFile read_tensor(const std::filesystem::path& path);

/// Binary (P5) or ASCII (P2) PGM, 8- or 16-bit. Samples are cast directly
/// to double without rescaling; the result is (Y, X).
TensorND read_pgm(const std::filesystem::path& path);

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace cwssim
