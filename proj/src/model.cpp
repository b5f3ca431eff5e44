#include "factrec/model.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "factrec/error.hpp"

namespace factrec {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingField: return "MissingField";
        case ErrorCode::EmptyQuery: return "EmptyQuery";
        case ErrorCode::DuplicatePromptId: return "DuplicatePromptId";
        case ErrorCode::InvalidRecord: return "InvalidRecord";
        case ErrorCode::NetworkError: return "NetworkError";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::BackendRefused: return "BackendRefused";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::PreconditionViolated: return "PreconditionViolated";
        case ErrorCode::SourceUnavailable: return "SourceUnavailable";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::MalformedCorpusRecord: return "MalformedCorpusRecord";
        case ErrorCode::UnparseableReply: return "UnparseableReply";
        case ErrorCode::JudgeJsonInvalid: return "JudgeJsonInvalid";
        case ErrorCode::EmptyReferenceSet: return "EmptyReferenceSet";
        case ErrorCode::EmptyResponse: return "EmptyResponse";
        case ErrorCode::MisalignedInputs: return "MisalignedInputs";
        case ErrorCode::AllUndefined: return "AllUndefined";
        case ErrorCode::FatalConfigError: return "FatalConfigError";
        case ErrorCode::CorruptArtifact: return "CorruptArtifact";
    }
    return "Unknown";
}

std::string_view to_string(VerdictLabel label) {
    switch (label) {
        case VerdictLabel::Supported: return "SUPPORTED";
        case VerdictLabel::Contradicted: return "CONTRADICTED";
        case VerdictLabel::NotSupported: return "NOT_SUPPORTED";
    }
    return "NOT_SUPPORTED";
}

std::string_view to_string(CoverageLabel label) {
    return label == CoverageLabel::Covered ? "COVERED" : "NOT_COVERED";
}

std::string_view to_string(SelectionMode mode) {
    switch (mode) {
        case SelectionMode::TopK: return "top_k";
        case SelectionMode::Threshold: return "threshold";
        case SelectionMode::All: return "all";
    }
    return "all";
}

std::optional<VerdictLabel> parse_verdict_label(std::string_view s) {
    if (s == "SUPPORTED") return VerdictLabel::Supported;
    if (s == "CONTRADICTED") return VerdictLabel::Contradicted;
    if (s == "NOT_SUPPORTED") return VerdictLabel::NotSupported;
    return std::nullopt;
}

std::optional<CoverageLabel> parse_coverage_label(std::string_view s) {
    if (s == "COVERED") return CoverageLabel::Covered;
    if (s == "NOT_COVERED") return CoverageLabel::NotCovered;
    return std::nullopt;
}

std::optional<SelectionMode> parse_selection_mode(std::string_view s) {
    if (s == "top_k") return SelectionMode::TopK;
    if (s == "threshold") return SelectionMode::Threshold;
    if (s == "all") return SelectionMode::All;
    return std::nullopt;
}

void SelectionRule::validate() const {
    if (mode == SelectionMode::TopK && (!k_star || *k_star < 1)) {
        throw Error(ErrorCode::InvalidRecord, "top_k selection requires k_star >= 1");
    }
    if (mode == SelectionMode::Threshold && !min_importance) {
        throw Error(ErrorCode::InvalidRecord, "threshold selection requires min_importance");
    }
}

std::string SelectionRule::label() const {
    switch (mode) {
        case SelectionMode::TopK: return fmt::format("K={}", k_star.value_or(0));
        case SelectionMode::Threshold: return fmt::format("imp>={}", min_importance.value_or(0.0));
        case SelectionMode::All: return "K=|F*|";
    }
    return "K=|F*|";
}

void ImportanceConfig::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0)) {
        throw Error(ErrorCode::InvalidRecord,
                    fmt::format("importance weights must be >= 0 with a positive sum (alpha={}, beta={})",
                                alpha, beta));
    }
}

std::string make_id(std::string_view prompt_id, std::string_view kind, std::size_t ordinal) {
    return fmt::format("{}:{}:{}", prompt_id, kind, ordinal);
}

namespace {

template <class T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    return it->get<T>();
}

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw Error(ErrorCode::MissingField, fmt::format("missing field '{}'", key));
    }
    return *it;
}

}  // namespace

void to_json(json& j, const EvalPrompt& v) {
    j = json{{"prompt_id", v.prompt_id},
             {"query", v.query},
             {"response", opt(v.response)},
             {"domain_tag", opt(v.domain_tag)}};
}

void from_json(const json& j, EvalPrompt& v) {
    v.prompt_id = require(j, "prompt_id").get<std::string>();
    v.query = require(j, "query").get<std::string>();
    v.response = get_opt<std::string>(j, "response");
    v.domain_tag = get_opt<std::string>(j, "domain_tag");
}

void to_json(json& j, const EvidenceDoc& v) {
    j = json{{"doc_id", v.doc_id},
             {"source_name", v.source_name},
             {"text", v.text},
             {"rank", v.rank},
             {"score", opt(v.score)}};
}

void from_json(const json& j, EvidenceDoc& v) {
    v.doc_id = require(j, "doc_id").get<std::string>();
    v.source_name = get_or<std::string>(j, "source_name", "");
    v.text = require(j, "text").get<std::string>();
    v.rank = get_or<int>(j, "rank", 1);
    v.score = get_opt<double>(j, "score");
}

void to_json(json& j, const EvidenceSet& v) {
    j = json{{"prompt_id", v.prompt_id}, {"docs", v.docs}};
}

void from_json(const json& j, EvidenceSet& v) {
    v.prompt_id = require(j, "prompt_id").get<std::string>();
    v.docs = get_or<std::vector<EvidenceDoc>>(j, "docs", {});
}

void to_json(json& j, const AtomicFact& v) {
    j = json{{"fact_id", v.fact_id},
             {"text", v.text},
             {"source_doc_ids", v.source_doc_ids},
             {"relevance_raw", v.relevance_raw},
             {"salience_raw", v.salience_raw},
             {"relevance_norm", v.relevance_norm},
             {"salience_norm", v.salience_norm},
             {"importance", v.importance},
             {"cluster_id", opt(v.cluster_id)},
             {"score_defaulted", v.score_defaulted}};
}

void from_json(const json& j, AtomicFact& v) {
    v.fact_id = require(j, "fact_id").get<std::string>();
    v.text = require(j, "text").get<std::string>();
    v.source_doc_ids = get_or<std::vector<std::string>>(j, "source_doc_ids", {});
    v.relevance_raw = get_or<int>(j, "relevance_raw", 0);
    v.salience_raw = get_or<int>(j, "salience_raw", 0);
    v.relevance_norm = get_or<double>(j, "relevance_norm", 0.0);
    v.salience_norm = get_or<double>(j, "salience_norm", 0.0);
    v.importance = get_or<double>(j, "importance", 0.0);
    v.cluster_id = get_opt<int>(j, "cluster_id");
    v.score_defaulted = get_or<bool>(j, "score_defaulted", false);
}

void to_json(json& j, const SelectionRule& v) {
    j = json{{"mode", to_string(v.mode)}, {"k_star", opt(v.k_star)}, {"min_importance", opt(v.min_importance)}};
}

void from_json(const json& j, SelectionRule& v) {
    auto mode = parse_selection_mode(get_or<std::string>(j, "mode", "all"));
    if (!mode) throw Error(ErrorCode::InvalidRecord, "unknown selection mode");
    v.mode = *mode;
    v.k_star = get_opt<int>(j, "k_star");
    v.min_importance = get_opt<double>(j, "min_importance");
}

void to_json(json& j, const ReferenceSet& v) {
    j = json{{"prompt_id", v.prompt_id}, {"facts", v.facts}, {"budget", v.budget}};
}

void from_json(const json& j, ReferenceSet& v) {
    v.prompt_id = require(j, "prompt_id").get<std::string>();
    v.facts = get_or<std::vector<AtomicFact>>(j, "facts", {});
    v.budget = get_or<SelectionRule>(j, "budget", SelectionRule{});
}

void to_json(json& j, const AtomicClaim& v) {
    j = json{{"claim_id", v.claim_id}, {"index", v.index}, {"text", v.text}};
}

void from_json(const json& j, AtomicClaim& v) {
    v.claim_id = require(j, "claim_id").get<std::string>();
    v.index = require(j, "index").get<int>();
    v.text = require(j, "text").get<std::string>();
}

void to_json(json& j, const ClaimVerdict& v) {
    j = json{{"claim_id", v.claim_id},
             {"label", to_string(v.label)},
             {"rationale", opt(v.rationale)},
             {"judge_failed", v.judge_failed}};
}

void from_json(const json& j, ClaimVerdict& v) {
    v.claim_id = require(j, "claim_id").get<std::string>();
    auto label = parse_verdict_label(require(j, "label").get<std::string>());
    if (!label) throw Error(ErrorCode::InvalidRecord, "unknown verdict label");
    v.label = *label;
    v.rationale = get_opt<std::string>(j, "rationale");
    v.judge_failed = get_or<bool>(j, "judge_failed", false);
}

void to_json(json& j, const FactCoverage& v) {
    j = json{{"fact_id", v.fact_id},
             {"label", to_string(v.label)},
             {"evidence_claim_indices", v.evidence_claim_indices},
             {"judge_failed", v.judge_failed}};
}

void from_json(const json& j, FactCoverage& v) {
    v.fact_id = require(j, "fact_id").get<std::string>();
    auto label = parse_coverage_label(require(j, "label").get<std::string>());
    if (!label) throw Error(ErrorCode::InvalidRecord, "unknown coverage label");
    v.label = *label;
    v.evidence_claim_indices = get_or<std::vector<int>>(j, "evidence_claim_indices", {});
    v.judge_failed = get_or<bool>(j, "judge_failed", false);
}

void to_json(json& j, const ImportanceConfig& v) {
    j = json{{"alpha", v.alpha}, {"beta", v.beta}};
}

void from_json(const json& j, ImportanceConfig& v) {
    v.alpha = get_or<double>(j, "alpha", 1.0);
    v.beta = get_or<double>(j, "beta", 1.0);
}

void to_json(json& j, const PromptMetrics& v) {
    j = json{{"prompt_id", v.prompt_id},
             {"n_claims", v.n_claims},
             {"n_facts", v.n_facts},
             {"n_supported", v.n_supported},
             {"n_contradicted", v.n_contradicted},
             {"n_not_supported", v.n_not_supported},
             {"n_covered", v.n_covered},
             {"prec", opt(v.prec)},
             {"rec", opt(v.rec)},
             {"rec_weighted", opt(v.rec_weighted)},
             {"f1", opt(v.f1)},
             {"c_rate", opt(v.c_rate)},
             {"ns_rate", opt(v.ns_rate)},
             {"flags", v.flags}};
}

void from_json(const json& j, PromptMetrics& v) {
    v.prompt_id = require(j, "prompt_id").get<std::string>();
    v.n_claims = get_or<int>(j, "n_claims", 0);
    v.n_facts = get_or<int>(j, "n_facts", 0);
    v.n_supported = get_or<int>(j, "n_supported", 0);
    v.n_contradicted = get_or<int>(j, "n_contradicted", 0);
    v.n_not_supported = get_or<int>(j, "n_not_supported", 0);
    v.n_covered = get_or<int>(j, "n_covered", 0);
    v.prec = get_opt<double>(j, "prec");
    v.rec = get_opt<double>(j, "rec");
    v.rec_weighted = get_opt<double>(j, "rec_weighted");
    v.f1 = get_opt<double>(j, "f1");
    v.c_rate = get_opt<double>(j, "c_rate");
    v.ns_rate = get_opt<double>(j, "ns_rate");
    v.flags = get_or<std::vector<std::string>>(j, "flags", {});
}

void to_json(json& j, const MetricExclusions& v) {
    j = json{{"prec", v.prec},     {"rec", v.rec},       {"rec_weighted", v.rec_weighted},
             {"f1", v.f1},         {"c_rate", v.c_rate}, {"ns_rate", v.ns_rate}};
}

void from_json(const json& j, MetricExclusions& v) {
    v.prec = get_or<int>(j, "prec", 0);
    v.rec = get_or<int>(j, "rec", 0);
    v.rec_weighted = get_or<int>(j, "rec_weighted", 0);
    v.f1 = get_or<int>(j, "f1", 0);
    v.c_rate = get_or<int>(j, "c_rate", 0);
    v.ns_rate = get_or<int>(j, "ns_rate", 0);
}

void to_json(json& j, const FailedPrompt& v) {
    j = json{{"prompt_id", v.prompt_id}, {"stage", v.stage}, {"reason", v.reason}};
}

void from_json(const json& j, FailedPrompt& v) {
    v.prompt_id = require(j, "prompt_id").get<std::string>();
    v.stage = get_or<std::string>(j, "stage", "");
    v.reason = get_or<std::string>(j, "reason", "");
}

void to_json(json& j, const RecallBudgetRow& v) {
    j = json{{"budget", v.budget},
             {"co", opt(v.co)},
             {"rel", opt(v.rel)},
             {"sal", opt(v.sal)},
             {"delta_co_rel", opt(v.delta_co_rel)},
             {"delta_co_sal", opt(v.delta_co_sal)}};
}

void from_json(const json& j, RecallBudgetRow& v) {
    v.budget = require(j, "budget").get<std::string>();
    v.co = get_opt<double>(j, "co");
    v.rel = get_opt<double>(j, "rel");
    v.sal = get_opt<double>(j, "sal");
    v.delta_co_rel = get_opt<double>(j, "delta_co_rel");
    v.delta_co_sal = get_opt<double>(j, "delta_co_sal");
}

void to_json(json& j, const RunReport& v) {
    j = json{{"run_id", v.run_id},
             {"domain", v.domain},
             {"per_prompt", v.per_prompt},
             {"macro_prec", opt(v.macro_prec)},
             {"macro_rec", opt(v.macro_rec)},
             {"macro_rec_weighted", opt(v.macro_rec_weighted)},
             {"macro_f1", opt(v.macro_f1)},
             {"macro_c_rate", opt(v.macro_c_rate)},
             {"macro_ns_rate", opt(v.macro_ns_rate)},
             {"micro_supported_rate", opt(v.micro_supported_rate)},
             {"micro_contradicted_rate", opt(v.micro_contradicted_rate)},
             {"micro_not_supported_rate", opt(v.micro_not_supported_rate)},
             {"avg_claims", v.avg_claims},
             {"avg_facts", v.avg_facts},
             {"rho", opt(v.rho)},
             {"n_prompts", v.n_prompts},
             {"excluded", v.excluded},
             {"failed", v.failed},
             {"recall_budgets", v.recall_budgets},
             {"config_snapshot", v.config_snapshot}};
}

void from_json(const json& j, RunReport& v) {
    v.run_id = require(j, "run_id").get<std::string>();
    v.domain = get_or<std::string>(j, "domain", "");
    v.per_prompt = get_or<std::vector<PromptMetrics>>(j, "per_prompt", {});
    v.macro_prec = get_opt<double>(j, "macro_prec");
    v.macro_rec = get_opt<double>(j, "macro_rec");
    v.macro_rec_weighted = get_opt<double>(j, "macro_rec_weighted");
    v.macro_f1 = get_opt<double>(j, "macro_f1");
    v.macro_c_rate = get_opt<double>(j, "macro_c_rate");
    v.macro_ns_rate = get_opt<double>(j, "macro_ns_rate");
    v.micro_supported_rate = get_opt<double>(j, "micro_supported_rate");
    v.micro_contradicted_rate = get_opt<double>(j, "micro_contradicted_rate");
    v.micro_not_supported_rate = get_opt<double>(j, "micro_not_supported_rate");
    v.avg_claims = get_or<double>(j, "avg_claims", 0.0);
    v.avg_facts = get_or<double>(j, "avg_facts", 0.0);
    v.rho = get_opt<double>(j, "rho");
    v.n_prompts = get_or<int>(j, "n_prompts", 0);
    v.excluded = get_or<MetricExclusions>(j, "excluded", MetricExclusions{});
    v.failed = get_or<std::vector<FailedPrompt>>(j, "failed", {});
    v.recall_budgets = get_or<std::vector<RecallBudgetRow>>(j, "recall_budgets", {});
    v.config_snapshot = j.value("config_snapshot", json::object());
}

EvalPrompt PromptValidator::validate(const json& record) {
    if (!record.is_object()) {
        throw Error(ErrorCode::InvalidRecord, "prompt record must be a JSON object");
    }
    const json* id = nullptr;
    if (auto it = record.find("prompt_id"); it != record.end()) {
        id = &*it;
    } else if (auto alt = record.find("id"); alt != record.end()) {
        id = &*alt;
    }
    if (id == nullptr || !id->is_string() || id->get<std::string>().empty()) {
        throw Error(ErrorCode::MissingField, "prompt record needs a non-empty 'prompt_id' (or 'id')");
    }
    auto q = record.find("query");
    if (q == record.end() || !q->is_string()) {
        throw Error(ErrorCode::MissingField, "prompt record needs a string 'query'");
    }

    EvalPrompt prompt;
    prompt.prompt_id = id->get<std::string>();
    prompt.query = q->get<std::string>();
    if (prompt.query.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw Error(ErrorCode::EmptyQuery, fmt::format("prompt '{}' has an empty query", prompt.prompt_id));
    }
    prompt.response = get_opt<std::string>(record, "response");
    prompt.domain_tag = get_opt<std::string>(record, "domain_tag");

    if (!seen_.insert(prompt.prompt_id).second) {
        throw Error(ErrorCode::DuplicatePromptId, fmt::format("prompt id '{}' appears twice", prompt.prompt_id));
    }
    return prompt;
}

EvalPrompt validate_prompt_record(const json& record) {
    PromptValidator validator;
    return validator.validate(record);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::CorruptArtifact, fmt::format("cannot open {}", path.string()));
    }
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::CorruptArtifact,
                        fmt::format("{}:{}: malformed JSON line ({})", path.string(), lineno, e.what()));
        }
    }
    return out;
}

std::string dump_line(const json& j) {
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace factrec
