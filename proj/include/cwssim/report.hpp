#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwssim/metrics.hpp"

namespace cwssim {

/// Metric fields aggregated per direction, in report order.
const std::vector<std::string>& report_metric_keys();

nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

struct SummaryStats {
  std::size_t n = 0;
  std::size_t n_infinite = 0;
  std::optional<double> mean;
  /// Sample standard deviation (n - 1 denominator); unset for n < 2.
  std::optional<double> std;
};

/// Infinite values are counted separately and excluded from mean/std.
SummaryStats summarize(const std::vector<double>& values);

/// {"nce_to_ce": {"count": n, "<metric>": {"mean", "std", "n", "n_infinite"}}, ...}
nlohmann::json aggregate_reports(const std::vector<MetricReport>& reports);

/// Builds a report document. `entries` are MetricReport JSON objects (they
/// may carry extra keys such as "label"); aggregates are recomputed.
nlohmann::json make_report(const nlohmann::json& entries, const nlohmann::json& provenance,
                           const nlohmann::json& run_info = nlohmann::json::object());

/// Concatenates entries of several reports and recomputes aggregates.
nlohmann::json merge_reports(const std::vector<nlohmann::json>& reports, const nlohmann::json& provenance,
                             const nlohmann::json& run_info = nlohmann::json::object());

/// The report without its "run_info" block, serialized deterministically.
std::string canonical_payload(const nlohmann::json& report);

/// One row per entry plus mean and std rows per direction.
std::string report_to_csv(const nlohmann::json& report);

}  // namespace cwssim
