#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "harness/evaluate.hpp"

namespace rohil {

// One evaluated (variant, seed, condition) cell. Fields that do not apply to a
// row (alpha and head for the source agent, the step for final-only runs) are
// absent and serialize as empty CSV cells / JSON nulls.
struct ReportRow {
  std::string variant;
  std::optional<double> alpha;
  std::string anchor_head;
  std::uint64_t seed = 0;
  int shift_pct = 0;
  std::uint32_t episodes = 0;
  double success_rate = 0.0;
  std::optional<double> mean_success_steps;
  std::optional<double> intervention_rate;
  std::optional<std::uint64_t> finetune_step;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

extern const char* const kReportColumns[10];

ReportRow make_row(const std::string& variant, std::optional<double> alpha, const std::string& anchor_head,
                   std::uint64_t seed, const EvalReport& report, std::optional<std::uint64_t> finetune_step);

// Sorted by (variant, alpha, anchor_head, seed, finetune_step, shift_pct).
void sort_rows(std::vector<ReportRow>& rows);

std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_json(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_csv(const std::string& text);

// Writes `csv_path` and a JSON mirror next to it (extension replaced by .json).
void emit_report(const std::vector<ReportRow>& rows, const std::string& csv_path);

}  // namespace rohil
