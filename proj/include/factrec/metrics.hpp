#pragma once
// Per-prompt and run-level factuality metrics. Pure functions; no LLM calls.
// An empty optional means "undefined", which is distinct from zero.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "factrec/model.hpp"

namespace factrec {

std::optional<double> prompt_precision(const std::vector<ClaimVerdict>& verdicts);

struct LabelRates {
    double c_rate = 0.0;
    double ns_rate = 0.0;
};

/// Contradicted and not-supported shares; undefined for an empty list.
std::optional<LabelRates> prompt_rates(const std::vector<ClaimVerdict>& verdicts);

std::optional<double> prompt_recall(const std::vector<FactCoverage>& coverage);

/// Covered importance over total importance. Facts and coverage are matched
/// by fact_id and must describe the same set (MisalignedInputs otherwise).
/// Undefined when the set is empty or the total importance is zero.
std::optional<double> prompt_recall_weighted(const std::vector<FactCoverage>& coverage,
                                             const std::vector<AtomicFact>& facts);

/// Harmonic mean; 0 when both are 0; undefined if either side is.
std::optional<double> prompt_f1(std::optional<double> prec, std::optional<double> rec);

/// The coverage entries for exactly the given facts, in fact order. Throws
/// MisalignedInputs when a fact has no entry.
std::vector<FactCoverage> coverage_for(const std::vector<AtomicFact>& facts, const std::vector<FactCoverage>& coverage);

/// All per-prompt counts and metrics. reference_facts is the selected set
/// and coverage must align with it.
PromptMetrics compute_prompt_metrics(std::string_view prompt_id, const std::vector<ClaimVerdict>& verdicts,
                                     const std::vector<AtomicFact>& reference_facts,
                                     const std::vector<FactCoverage>& coverage);

/// Macro means over prompts where each metric is defined, with per-metric
/// excluded counts; avg_claims, avg_facts and rho over all given prompts.
/// Throws AllUndefined when no prompt has any defined metric.
RunReport macro_aggregate(const std::vector<PromptMetrics>& per_prompt);

/// Records failed prompts and counts each of them as excluded from every metric.
void attach_failures(RunReport& report, const std::vector<FailedPrompt>& failed);

/// Everything needed to re-rank one prompt's candidate facts: raw-scored
/// facts and a coverage label for each of them.
struct BudgetInput {
    std::string prompt_id;
    std::vector<AtomicFact> facts;
    std::vector<FactCoverage> coverage;
};

struct Weighting {
    std::string name;
    ImportanceConfig cfg;
};

/// combined (1,1), relevance-only (1,0), salience-only (0,1).
std::vector<Weighting> standard_weightings();

/// K = 1, K = 5 and all facts.
std::vector<SelectionRule> standard_budgets();

/// Macro recall of the reference set re-formed under one weighting and one
/// budget. Prompts whose set comes out empty are skipped; undefined if all are.
std::optional<double> recall_under(const std::vector<BudgetInput>& inputs, const ImportanceConfig& weighting,
                                   const SelectionRule& budget);

/// One row per budget with combined, relevance-only and salience-only recall
/// plus the combined-minus-other deltas.
std::vector<RecallBudgetRow> recall_at_budgets(const std::vector<BudgetInput>& inputs,
                                               const std::vector<SelectionRule>& budgets);

}  // namespace factrec
