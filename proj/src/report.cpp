#include "factrec/report.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "factrec/error.hpp"

namespace factrec {

namespace {

constexpr std::string_view kUndefined = "—";

// Fixed-point rendering that never prints "-0.0".
std::string fixed(double v, int decimals) {
    std::string s = fmt::format("{:.{}f}", v, decimals);
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

std::string csv_cell(const std::optional<double>& v, double scale, int decimals) {
    return v ? fixed(*v * scale, decimals) : std::string();
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string md_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '|' || c == '*') out += '\\';
        out += c;
    }
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::FatalConfigError, fmt::format("cannot write {}", path.string()));
    out << body;
}

}  // namespace

std::string percent_cell(const std::optional<double>& v) {
    return v ? fixed(*v * 100.0, 1) : std::string(kUndefined);
}

std::string emit_table1(const std::vector<RunReport>& reports) {
    std::string out = "| Run | Prec | Rec | F1 |\n|---|---:|---:|---:|\n";
    bool undefined = false;
    for (const auto& r : reports) {
        undefined = undefined || !r.macro_prec || !r.macro_rec || !r.macro_f1;
        out += fmt::format("| {} | {} | {} | {} |\n", r.run_id, percent_cell(r.macro_prec), percent_cell(r.macro_rec),
                           percent_cell(r.macro_f1));
    }
    if (undefined) out += "\n— undefined: no evaluable prompt for this metric.\n";
    return out;
}

std::string emit_tradeoff(const std::vector<RunReport>& reports) {
    std::vector<std::string> domains;
    std::map<std::string, std::vector<const RunReport*>> by_domain;
    for (const auto& r : reports) {
        if (r.per_prompt.empty()) {
            throw Error(ErrorCode::PreconditionViolated, fmt::format("run {} has no evaluated prompts", r.run_id));
        }
        auto& group = by_domain[r.domain];
        if (group.empty()) domains.push_back(r.domain);
        group.push_back(&r);
    }
    std::string out;
    for (const auto& domain : domains) {
        const auto& group = by_domain[domain];
        if (!out.empty()) out += "\n";
        out += fmt::format("### {} ({})\n\n| Run | Prec | Rec | ρ |\n|---|---:|---:|---:|\n",
                           domain.empty() ? "all" : domain, fixed(group.front()->avg_facts, 1));
        for (const auto* r : group) {
            out += fmt::format("| {} | {} | {} | {} |\n", r->run_id, percent_cell(r->macro_prec),
                               percent_cell(r->macro_rec), r->rho ? fixed(*r->rho, 1) : std::string(kUndefined));
        }
    }
    return out;
}

std::string emit_label_breakdown(const std::vector<RunReport>& reports) {
    std::string out = "run,aggregation,supported_pct,not_supported_pct,contradicted_pct\n";
    for (const auto& r : reports) {
        out += fmt::format("{},macro,{},{},{}\n", csv_escape(r.run_id), csv_cell(r.macro_prec, 100.0, 1),
                           csv_cell(r.macro_ns_rate, 100.0, 1), csv_cell(r.macro_c_rate, 100.0, 1));
        out += fmt::format("{},micro,{},{},{}\n", csv_escape(r.run_id), csv_cell(r.micro_supported_rate, 100.0, 1),
                           csv_cell(r.micro_not_supported_rate, 100.0, 1), csv_cell(r.micro_contradicted_rate, 100.0, 1));
    }
    return out;
}

std::string emit_recall_budgets(const std::vector<RecallBudgetRow>& rows) {
    std::string out = "budget,co,delta_co_sal,delta_co_rel\n";
    for (const auto& row : rows) {
        out += fmt::format("{},{},{},{}\n", csv_escape(row.budget), csv_cell(row.co, 100.0, 1),
                           csv_cell(row.delta_co_sal, 100.0, 1), csv_cell(row.delta_co_rel, 100.0, 1));
    }
    return out;
}

std::string emit_metrics_csv(const RunReport& report) {
    std::string out =
        "prompt_id,n_claims,n_facts,n_supported,n_contradicted,n_not_supported,n_covered,"
        "prec,rec,rec_weighted,f1,c_rate,ns_rate\n";
    for (const auto& m : report.per_prompt) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_escape(m.prompt_id), m.n_claims, m.n_facts,
                           m.n_supported, m.n_contradicted, m.n_not_supported, m.n_covered, csv_cell(m.prec, 1.0, 3),
                           csv_cell(m.rec, 1.0, 3), csv_cell(m.rec_weighted, 1.0, 3), csv_cell(m.f1, 1.0, 3),
                           csv_cell(m.c_rate, 1.0, 3), csv_cell(m.ns_rate, 1.0, 3));
    }
    out += fmt::format("__macro__,{},{},,,,,{},{},{},{},{},{}\n", fixed(report.avg_claims, 3),
                       fixed(report.avg_facts, 3), csv_cell(report.macro_prec, 1.0, 3),
                       csv_cell(report.macro_rec, 1.0, 3), csv_cell(report.macro_rec_weighted, 1.0, 3),
                       csv_cell(report.macro_f1, 1.0, 3), csv_cell(report.macro_c_rate, 1.0, 3),
                       csv_cell(report.macro_ns_rate, 1.0, 3));
    return out;
}

std::string emit_markdown(const RunReport& report) {
    std::string out = fmt::format("# Factuality report: {}\n\n", report.run_id);
    out += fmt::format("Prompts evaluated: {} of {}", report.per_prompt.size(), report.per_prompt.size() + report.failed.size());
    out += fmt::format(". Average claims {}, average reference facts {}.\n\n", fixed(report.avg_claims, 1),
                       fixed(report.avg_facts, 1));

    out += "## Precision, recall, F1 (macro, %)\n\n" + emit_table1({report}) + "\n";
    out += fmt::format("Weighted recall: {}. Contradicted: {}. Not supported: {}.\n\n",
                       percent_cell(report.macro_rec_weighted), percent_cell(report.macro_c_rate),
                       percent_cell(report.macro_ns_rate));
    if (!report.per_prompt.empty()) out += "## Claims versus reference facts\n\n" + emit_tradeoff({report}) + "\n";

    if (!report.recall_budgets.empty()) {
        out += "## Recall by reference budget (%)\n\n| Budget | Co | Rel | Sal | Δ(Co-Sal) | Δ(Co-Rel) |\n"
               "|---|---:|---:|---:|---:|---:|\n";
        for (const auto& row : report.recall_budgets) {
            out += fmt::format("| {} | {} | {} | {} | {} | {} |\n", md_escape(row.budget), percent_cell(row.co),
                               percent_cell(row.rel), percent_cell(row.sal), percent_cell(row.delta_co_sal),
                               percent_cell(row.delta_co_rel));
        }
        out += "\n";
    }

    out += "## Per prompt\n\n| Prompt | Claims | Facts | Prec | Rec | Rec (w) | F1 | Flags |\n"
           "|---|---:|---:|---:|---:|---:|---:|---|\n";
    for (const auto& m : report.per_prompt) {
        std::string flags;
        for (const auto& f : m.flags) flags += (flags.empty() ? "" : ", ") + f;
        out += fmt::format("| {} | {} | {} | {} | {} | {} | {} | {} |\n", m.prompt_id, m.n_claims, m.n_facts,
                           percent_cell(m.prec), percent_cell(m.rec), percent_cell(m.rec_weighted),
                           percent_cell(m.f1), flags);
    }

    if (!report.failed.empty()) {
        out += "\n## Failed prompts\n\n";
        for (const auto& f : report.failed) out += fmt::format("- {} ({}): {}\n", f.prompt_id, f.stage, f.reason);
    }
    return out;
}

std::string emit_report_json(const RunReport& report) {
    return json(report).dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

void write_report_files(const RunReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir / "report.json", emit_report_json(report));
    write_file(dir / "report.md", emit_markdown(report));
    write_file(dir / "metrics.csv", emit_metrics_csv(report));
    write_file(dir / "breakdown.csv", emit_label_breakdown({report}));
    write_file(dir / "recall_budgets.csv", emit_recall_budgets(report.recall_budgets));
}

}  // namespace factrec
