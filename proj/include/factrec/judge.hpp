#pragma once
// LLM-as-judge labeling: claim verification against retrieved evidence and
// reference-fact coverage against the claim list.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "factrec/gateway.hpp"
#include "factrec/model.hpp"
#include "factrec/reference.hpp"

namespace factrec {

// --- verification ----------------------------------------------------------------

struct RenderedEvidence {
    std::string text;
    std::size_t docs_used = 0;  // docs included, the last possibly cut
    bool truncated = false;
};

/// Evidence docs in rank order as "[rank] doc_id\n<text>" blocks separated by
/// blank lines, cut at budget bytes (UTF-8 safe); docs past the cut are dropped.
RenderedEvidence render_evidence(const EvidenceSet& evidence, std::size_t budget);

struct VerdictReply {
    VerdictLabel label = VerdictLabel::NotSupported;
    std::optional<std::string> rationale;
};

/// Accepts {"label": ..., "rationale": str} with rationale optional; any
/// other key, a bad label or non-JSON text gives nullopt.
std::optional<VerdictReply> parse_verdict_reply(std::string_view reply);

struct VerifyOptions {
    LlmCallOptions llm;
    std::size_t evidence_char_budget = 24000;
};

/// Empty evidence short-circuits to NotSupported without a call. A reply that
/// stays invalid after one retry yields NotSupported with judge_failed set.
ClaimVerdict verify_claim(const AtomicClaim& claim, const EvidenceSet& evidence, Gateway& gateway,
                          const VerifyOptions& options);

// --- coverage --------------------------------------------------------------------

struct CoverageReply {
    bool valid = false;  // false means the reply breaks the schema and should be retried
    CoverageLabel label = CoverageLabel::NotCovered;
    std::vector<int> evidence_claim_ids;
    std::vector<std::string> warnings;
};

/// Parses {"label": "COVERED"|"NOT_COVERED", "evidence_claim_ids": [int...]}
/// with exactly those keys. NOT_COVERED with ids is coerced to an empty list;
/// ids outside 1..n_claims are dropped; COVERED with no ids is invalid, and
/// COVERED whose ids were all dropped becomes NOT_COVERED. Both with warnings.
CoverageReply parse_coverage_reply(std::string_view reply, std::size_t n_claims);

struct CoverageOptions {
    LlmCallOptions llm;
};

/// An empty claim list short-circuits to NotCovered without a call.
FactCoverage check_coverage(const AtomicFact& fact, const std::vector<AtomicClaim>& claims, Gateway& gateway,
                            const CoverageOptions& options);

/// Pseudo-claims built from the response's sentences, for judging coverage
/// against the raw response instead of the extracted claims.
std::vector<AtomicClaim> response_sentences_as_claims(std::string_view prompt_id, std::string_view response);

}  // namespace factrec
