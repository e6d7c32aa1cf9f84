#include "harness/report.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "datasets/datasets.hpp"
#include "harness/config.hpp"

namespace rohil {

const char* const kReportColumns[10] = {"variant",  "alpha",        "anchor_head",        "seed",
                                        "shift_pct", "episodes",     "success_rate",       "mean_success_steps",
                                        "intervention_rate", "finetune_step"};

ReportRow make_row(const std::string& variant, std::optional<double> alpha, const std::string& anchor_head,
                   std::uint64_t seed, const EvalReport& report, std::optional<std::uint64_t> finetune_step) {
  ReportRow row;
  row.variant = variant;
  row.alpha = alpha;
  row.anchor_head = anchor_head;
  row.seed = seed;
  row.shift_pct = shift_percent(report.shift);
  row.episodes = report.episodes;
  row.success_rate = report.success_rate;
  row.mean_success_steps = report.mean_success_steps;
  row.intervention_rate = report.intervention_rate;
  row.finetune_step = finetune_step;
  return row;
}

void sort_rows(std::vector<ReportRow>& rows) {
  auto key = [](const ReportRow& r) {
    return std::tie(r.variant, r.alpha, r.anchor_head, r.seed, r.finetune_step, r.shift_pct);
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const ReportRow& a, const ReportRow& b) { return key(a) < key(b); });
}

namespace {

std::string opt_double(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

template <typename T>
T parse_cell(const std::string& text, const char* column) {
  T v{};
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    fail(ErrorCode::kInvalidArgument, std::string("report: bad ") + column + " cell '" + text + "'");
  }
  return v;
}

template <typename T>
std::optional<T> parse_optional(const std::string& text, const char* column) {
  if (text.empty()) return std::nullopt;
  return parse_cell<T>(text, column);
}

}  // namespace

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out;
  for (std::size_t c = 0; c < 10; ++c) out += std::string(c ? "," : "") + kReportColumns[c];
  out += "\n";
  for (const ReportRow& r : rows) {
    out += r.variant + "," + opt_double(r.alpha) + "," + r.anchor_head + "," + std::to_string(r.seed) + "," +
           std::to_string(r.shift_pct) + "," + std::to_string(r.episodes) + "," + format_double(r.success_rate) +
           "," + opt_double(r.mean_success_steps) + "," + opt_double(r.intervention_rate) + "," +
           (r.finetune_step ? std::to_string(*r.finetune_step) : "") + "\n";
  }
  return out;
}

std::string report_json(const std::vector<ReportRow>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const ReportRow& r : rows) {
    nlohmann::ordered_json j;
    j["variant"] = r.variant;
    j["alpha"] = r.alpha ? nlohmann::ordered_json(*r.alpha) : nlohmann::ordered_json();
    j["anchor_head"] = r.anchor_head;
    j["seed"] = r.seed;
    j["shift_pct"] = r.shift_pct;
    j["episodes"] = r.episodes;
    j["success_rate"] = r.success_rate;
    j["mean_success_steps"] = r.mean_success_steps ? nlohmann::ordered_json(*r.mean_success_steps) : nlohmann::ordered_json();
    j["intervention_rate"] = r.intervention_rate ? nlohmann::ordered_json(*r.intervention_rate) : nlohmann::ordered_json();
    j["finetune_step"] = r.finetune_step ? nlohmann::ordered_json(*r.finetune_step) : nlohmann::ordered_json();
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kInvalidArgument, "report: missing header");
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() != 10 || !std::equal(header.begin(), header.end(), kReportColumns)) {
    fail(ErrorCode::kInvalidArgument, "report: unexpected header '" + line + "'");
  }
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> c = split_csv_line(line);
    if (c.size() != 10) fail(ErrorCode::kInvalidArgument, "report: row has " + std::to_string(c.size()) + " cells");
    ReportRow r;
    r.variant = c[0];
    r.alpha = parse_optional<double>(c[1], "alpha");
    r.anchor_head = c[2];
    r.seed = parse_cell<std::uint64_t>(c[3], "seed");
    r.shift_pct = parse_cell<int>(c[4], "shift_pct");
    r.episodes = parse_cell<std::uint32_t>(c[5], "episodes");
    r.success_rate = parse_cell<double>(c[6], "success_rate");
    r.mean_success_steps = parse_optional<double>(c[7], "mean_success_steps");
    r.intervention_rate = parse_optional<double>(c[8], "intervention_rate");
    r.finetune_step = parse_optional<std::uint64_t>(c[9], "finetune_step");
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_report(const std::vector<ReportRow>& rows, const std::string& csv_path) {
  std::vector<ReportRow> sorted = rows;
  sort_rows(sorted);
  const std::string csv = report_csv(sorted);
  write_file(csv_path, std::vector<std::uint8_t>(csv.begin(), csv.end()));
  const std::string json = report_json(sorted);
  const std::string json_path = std::filesystem::path(csv_path).replace_extension(".json").string();
  write_file(json_path, std::vector<std::uint8_t>(json.begin(), json.end()));
}

}  // namespace rohil
