#pragma once
// Markdown and CSV renderings of a RunReport. Every number shown is a report
// field after rounding; nothing is recomputed here.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "factrec/model.hpp"

namespace factrec {

/// A share in [0,1] as a percentage with one decimal ("8.0"); "—" if undefined.
std::string percent_cell(const std::optional<double>& v);

/// Prec / Rec / F1 percentages, one row per report.
std::string emit_table1(const std::vector<RunReport>& reports);

/// Prec / Rec / rho per run, grouped under a "domain (avg facts)" heading.
/// Throws PreconditionViolated for a report without prompts.
std::string emit_tradeoff(const std::vector<RunReport>& reports);

/// CSV run,aggregation,supported_pct,not_supported_pct,contradicted_pct with
/// a macro and a micro row per run.
std::string emit_label_breakdown(const std::vector<RunReport>& reports);

/// CSV budget,co,delta_co_sal,delta_co_rel in percent.
std::string emit_recall_budgets(const std::vector<RecallBudgetRow>& rows);

/// CSV with one row per prompt and a final __macro__ row, 3 decimals.
std::string emit_metrics_csv(const RunReport& report);

std::string emit_markdown(const RunReport& report);

/// Pretty JSON with sorted keys and a trailing newline.
std::string emit_report_json(const RunReport& report);

/// Writes report.json, report.md, metrics.csv, breakdown.csv and
/// recall_budgets.csv into dir.
void write_report_files(const RunReport& report, const std::filesystem::path& dir);

}  // namespace factrec
