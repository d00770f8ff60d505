#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "jitter/trainer.hpp"

namespace jitter {

inline constexpr const char *kReportCsvHeader =
    "wrapper,seeds,best_acc,mean_acc,final_raw_train_loss";

/// One row per wrapper: best and mean final-epoch test accuracy across seeds,
/// plus the mean final-epoch raw training loss.
struct ReportRow {
  std::string wrapper;
  std::size_t seeds = 0;
  double best_acc = 0.0;
  double mean_acc = 0.0;
  double final_raw_train_loss = 0.0;
  std::size_t failed = 0;
};

/// A run that did not finish; it shows up in the report's failure count.
struct FailedRun {
  std::string wrapper;
  std::uint64_t seed = 0;
  std::string reason;
};

/// Groups records by wrapper in first-appearance order. Records must agree on
/// comparison_key. Records without epochs count as seeds with accuracy 0.
inline std::vector<ReportRow> compare_runs(std::span<const RunRecord> records,
                                           std::span<const FailedRun> failures = {}) {
  for (const auto &r : records)
    if (r.comparison_key != records.front().comparison_key)
      throw InvalidArgument("compare_runs: run " + r.run_id +
                            " was trained under a different dataset/model/optimizer config");
  std::vector<ReportRow> rows;
  auto row_for = [&rows](const std::string &wrapper) -> ReportRow & {
    for (auto &row : rows)
      if (row.wrapper == wrapper)
        return row;
    rows.push_back({wrapper});
    return rows.back();
  };
  for (const auto &r : records) {
    auto &row = row_for(r.wrapper);
    const double acc = r.epochs.empty() ? 0.0 : r.epochs.back().test_accuracy;
    const double loss = r.epochs.empty() ? 0.0 : r.epochs.back().raw_train_loss;
    row.best_acc = row.seeds == 0 ? acc : std::max(row.best_acc, acc);
    row.mean_acc += acc;
    row.final_raw_train_loss += loss;
    ++row.seeds;
  }
  for (auto &row : rows) {
    if (row.seeds > 0) {
      row.mean_acc /= static_cast<double>(row.seeds);
      row.final_raw_train_loss /= static_cast<double>(row.seeds);
    }
  }
  for (const auto &f : failures)
    ++row_for(f.wrapper).failed;
  return rows;
}

/// CSV report. Wrappers whose every run failed leave the numeric columns empty.
inline std::string report_csv(std::span<const ReportRow> rows) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto &r : rows) {
    out += r.wrapper + "," + std::to_string(r.seeds) + ",";
    if (r.seeds > 0)
      out += format_float(r.best_acc) + "," + format_float(r.mean_acc) + "," +
             format_float(r.final_raw_train_loss);
    else
      out += ",,";
    out += "\n";
  }
  return out;
}

/// Fixed-width text table with the same columns plus a failure note.
inline std::string report_text(std::span<const ReportRow> rows) {
  std::size_t name_width = 7;
  for (const auto &r : rows)
    name_width = std::max(name_width, r.wrapper.size());
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-*s  %5s  %8s  %8s  %20s\n", static_cast<int>(name_width),
                "wrapper", "seeds", "best_acc", "mean_acc", "final_raw_train_loss");
  out += buf;
  for (const auto &r : rows) {
    if (r.seeds > 0)
      std::snprintf(buf, sizeof buf, "%-*s  %5zu  %8.4f  %8.4f  %20.6g", static_cast<int>(name_width),
                    r.wrapper.c_str(), r.seeds, r.best_acc, r.mean_acc, r.final_raw_train_loss);
    else
      std::snprintf(buf, sizeof buf, "%-*s  %5zu  %8s  %8s  %20s", static_cast<int>(name_width),
                    r.wrapper.c_str(), r.seeds, "-", "-", "-");
    out += buf;
    if (r.failed > 0)
      out += "  (" + std::to_string(r.failed) + " failed)";
    out += "\n";
  }
  return out;
}

} // namespace jitter
