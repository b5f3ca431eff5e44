#pragma once
// Shared domain types for the factuality evaluation pipeline.
//
// Every type here serializes to a single JSON object with snake_case field
// names. Optional fields are written as null when absent so that
// serialize -> parse -> serialize is byte-identical.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace factrec {

using json = nlohmann::json;

struct EvalPrompt {
    std::string prompt_id;
    std::string query;
    std::optional<std::string> response;
    std::optional<std::string> domain_tag;

    bool operator==(const EvalPrompt&) const = default;
};

struct EvidenceDoc {
    std::string doc_id;
    std::string source_name;
    std::string text;
    int rank = 1;
    std::optional<double> score;

    bool operator==(const EvidenceDoc&) const = default;
};

struct EvidenceSet {
    std::string prompt_id;
    std::vector<EvidenceDoc> docs;

    bool operator==(const EvidenceSet&) const = default;
};

/// A reference fact. Raw scores of 0 mean "not scored yet".
struct AtomicFact {
    std::string fact_id;
    std::string text;
    std::vector<std::string> source_doc_ids;
    int relevance_raw = 0;
    int salience_raw = 0;
    double relevance_norm = 0.0;
    double salience_norm = 0.0;
    double importance = 0.0;
    std::optional<int> cluster_id;
    bool score_defaulted = false;

    [[nodiscard]] bool scored() const noexcept { return relevance_raw > 0 && salience_raw > 0; }

    bool operator==(const AtomicFact&) const = default;
};

enum class SelectionMode { TopK, Threshold, All };

struct SelectionRule {
    SelectionMode mode = SelectionMode::All;
    std::optional<int> k_star;
    std::optional<double> min_importance;

    static SelectionRule top_k(int k) { return {SelectionMode::TopK, k, std::nullopt}; }
    static SelectionRule threshold(double t) { return {SelectionMode::Threshold, std::nullopt, t}; }
    static SelectionRule all() { return {}; }

    /// Throws InvalidRecord when the mode's parameter is missing or out of range.
    void validate() const;
    /// Short label used in tables: "K=5", "imp>=0.5", "K=|F*|".
    [[nodiscard]] std::string label() const;

    bool operator==(const SelectionRule&) const = default;
};

struct ReferenceSet {
    std::string prompt_id;
    std::vector<AtomicFact> facts;
    SelectionRule budget;

    bool operator==(const ReferenceSet&) const = default;
};

struct AtomicClaim {
    std::string claim_id;
    int index = 1;
    std::string text;

    bool operator==(const AtomicClaim&) const = default;
};

enum class VerdictLabel { Supported, Contradicted, NotSupported };

struct ClaimVerdict {
    std::string claim_id;
    VerdictLabel label = VerdictLabel::NotSupported;
    std::optional<std::string> rationale;
    bool judge_failed = false;

    bool operator==(const ClaimVerdict&) const = default;
};

enum class CoverageLabel { Covered, NotCovered };

struct FactCoverage {
    std::string fact_id;
    CoverageLabel label = CoverageLabel::NotCovered;
    std::vector<int> evidence_claim_indices;
    bool judge_failed = false;

    bool operator==(const FactCoverage&) const = default;
};

struct ImportanceConfig {
    double alpha = 1.0;
    double beta = 1.0;

    /// Throws InvalidRecord unless alpha, beta >= 0 and alpha + beta > 0.
    void validate() const;

    bool operator==(const ImportanceConfig&) const = default;
};

struct PromptMetrics {
    std::string prompt_id;
    int n_claims = 0;
    int n_facts = 0;
    int n_supported = 0;
    int n_contradicted = 0;
    int n_not_supported = 0;
    int n_covered = 0;
    // nullopt means undefined (empty claim set or empty reference set).
    std::optional<double> prec;
    std::optional<double> rec;
    std::optional<double> rec_weighted;
    std::optional<double> f1;
    std::optional<double> c_rate;
    std::optional<double> ns_rate;
    std::vector<std::string> flags;

    bool operator==(const PromptMetrics&) const = default;
};

/// Number of prompts for which each macro metric was undefined.
struct MetricExclusions {
    int prec = 0;
    int rec = 0;
    int rec_weighted = 0;
    int f1 = 0;
    int c_rate = 0;
    int ns_rate = 0;

    bool operator==(const MetricExclusions&) const = default;
};

struct FailedPrompt {
    std::string prompt_id;
    std::string stage;
    std::string reason;

    bool operator==(const FailedPrompt&) const = default;
};

/// One row of the recall-vs-budget table: recall under combined (alpha=beta=1),
/// relevance-only and salience-only rankings for one selection rule.
struct RecallBudgetRow {
    std::string budget;
    std::optional<double> co;
    std::optional<double> rel;
    std::optional<double> sal;
    std::optional<double> delta_co_rel;
    std::optional<double> delta_co_sal;

    bool operator==(const RecallBudgetRow&) const = default;
};

struct RunReport {
    std::string run_id;
    std::string domain;
    std::vector<PromptMetrics> per_prompt;
    std::optional<double> macro_prec;
    std::optional<double> macro_rec;
    std::optional<double> macro_rec_weighted;
    std::optional<double> macro_f1;
    std::optional<double> macro_c_rate;
    std::optional<double> macro_ns_rate;
    // Label shares over all claims of the run pooled together.
    std::optional<double> micro_supported_rate;
    std::optional<double> micro_contradicted_rate;
    std::optional<double> micro_not_supported_rate;
    double avg_claims = 0.0;
    double avg_facts = 0.0;
    std::optional<double> rho;
    int n_prompts = 0;
    MetricExclusions excluded;
    std::vector<FailedPrompt> failed;
    std::vector<RecallBudgetRow> recall_budgets;
    json config_snapshot = json::object();

    bool operator==(const RunReport&) const = default;
};

// --- label spellings used on the wire -------------------------------------

std::string_view to_string(VerdictLabel label);
std::string_view to_string(CoverageLabel label);
std::string_view to_string(SelectionMode mode);
std::optional<VerdictLabel> parse_verdict_label(std::string_view s);
std::optional<CoverageLabel> parse_coverage_label(std::string_view s);
std::optional<SelectionMode> parse_selection_mode(std::string_view s);

// --- JSON (nlohmann ADL hooks) --------------------------------------------

void to_json(json& j, const EvalPrompt& v);
void from_json(const json& j, EvalPrompt& v);
void to_json(json& j, const EvidenceDoc& v);
void from_json(const json& j, EvidenceDoc& v);
void to_json(json& j, const EvidenceSet& v);
void from_json(const json& j, EvidenceSet& v);
void to_json(json& j, const AtomicFact& v);
void from_json(const json& j, AtomicFact& v);
void to_json(json& j, const SelectionRule& v);
void from_json(const json& j, SelectionRule& v);
void to_json(json& j, const ReferenceSet& v);
void from_json(const json& j, ReferenceSet& v);
void to_json(json& j, const AtomicClaim& v);
void from_json(const json& j, AtomicClaim& v);
void to_json(json& j, const ClaimVerdict& v);
void from_json(const json& j, ClaimVerdict& v);
void to_json(json& j, const FactCoverage& v);
void from_json(const json& j, FactCoverage& v);
void to_json(json& j, const ImportanceConfig& v);
void from_json(const json& j, ImportanceConfig& v);
void to_json(json& j, const PromptMetrics& v);
void from_json(const json& j, PromptMetrics& v);
void to_json(json& j, const MetricExclusions& v);
void from_json(const json& j, MetricExclusions& v);
void to_json(json& j, const FailedPrompt& v);
void from_json(const json& j, FailedPrompt& v);
void to_json(json& j, const RecallBudgetRow& v);
void from_json(const json& j, RecallBudgetRow& v);
void to_json(json& j, const RunReport& v);
void from_json(const json& j, RunReport& v);

// --- identifiers -------------------------------------------------------------

/// Deterministic identifier "{prompt_id}:{kind}:{ordinal}".
std::string make_id(std::string_view prompt_id, std::string_view kind, std::size_t ordinal);

// --- input validation --------------------------------------------------------

/// Validates raw prompt records, tracking ids seen so far in one run.
class PromptValidator {
public:
    /// Accepts "prompt_id" (or "id"), "query", optional "response" and
    /// "domain_tag". Throws MissingField, EmptyQuery or DuplicatePromptId.
    EvalPrompt validate(const json& record);

private:
    std::set<std::string> seen_;
};

EvalPrompt validate_prompt_record(const json& record);

// --- JSON Lines --------------------------------------------------------------

/// Parses every non-blank line; a malformed line raises CorruptArtifact
/// naming the file and the 1-based line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Compact single-line dump used for every artifact line.
std::string dump_line(const json& j);

}  // namespace factrec
