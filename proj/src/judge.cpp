#include "factrec/judge.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "factrec/claims.hpp"
#include "factrec/prompts.hpp"

namespace factrec {

namespace {

std::size_t utf8_floor(std::string_view s, std::size_t n) {
    if (n >= s.size()) return s.size();
    while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80) --n;
    return n;
}

ChatRequest judge_request(const LlmCallOptions& llm, std::string user_text, RequestTag tag) {
    ChatRequest req;
    req.model_name = llm.model;
    req.user_text = std::move(user_text);
    req.temperature = 0.0;
    req.max_tokens = llm.max_tokens;
    req.request_tag = tag;
    return req;
}

}  // namespace

RenderedEvidence render_evidence(const EvidenceSet& evidence, std::size_t budget) {
    RenderedEvidence out;
    for (const auto& doc : evidence.docs) {
        std::string block = fmt::format("{}[{}] {}\n{}", out.text.empty() ? "" : "\n\n", doc.rank, doc.doc_id, doc.text);
        if (out.text.size() + block.size() > budget) {
            std::size_t room = budget - out.text.size();
            out.text += block.substr(0, utf8_floor(block, room));
            out.docs_used += 1;
            out.truncated = true;
            break;
        }
        out.text += block;
        out.docs_used += 1;
    }
    return out;
}

std::optional<VerdictReply> parse_verdict_reply(std::string_view reply) {
    auto parsed = prompts::parse_strict_json(reply);
    if (!parsed || !parsed->is_object() || !parsed->contains("label")) return std::nullopt;
    for (const auto& [key, value] : parsed->items()) {
        if (key != "label" && key != "rationale") return std::nullopt;
    }
    const auto& label = parsed->at("label");
    if (!label.is_string()) return std::nullopt;
    auto parsed_label = parse_verdict_label(label.get<std::string>());
    if (!parsed_label) return std::nullopt;
    VerdictReply out{*parsed_label, std::nullopt};
    if (parsed->contains("rationale")) {
        const auto& r = parsed->at("rationale");
        if (r.is_string()) {
            out.rationale = r.get<std::string>();
        } else if (!r.is_null()) {
            return std::nullopt;
        }
    }
    return out;
}

ClaimVerdict verify_claim(const AtomicClaim& claim, const EvidenceSet& evidence, Gateway& gateway,
                          const VerifyOptions& options) {
    ClaimVerdict verdict{claim.claim_id, VerdictLabel::NotSupported, std::nullopt, false};
    if (evidence.docs.empty()) return verdict;

    auto rendered = render_evidence(evidence, options.evidence_char_budget);
    if (rendered.truncated) {
        spdlog::warn("claim {}: evidence cut at {} bytes; {} of {} docs shown", claim.claim_id,
                     options.evidence_char_budget, rendered.docs_used, evidence.docs.size());
    }
    auto req = judge_request(options.llm,
                             prompts::render(prompts::kVerification, {{"claim", claim.text}, {"evidence", rendered.text}}),
                             RequestTag::PrecisionJudge);
    auto reply = parse_verdict_reply(gateway.chat(req).text);
    if (!reply) {
        req.user_text += prompts::kJsonReminder;
        reply = parse_verdict_reply(gateway.chat(req).text);
    }
    if (!reply) {
        spdlog::warn("claim {}: verification reply invalid after retry; labeled NOT_SUPPORTED", claim.claim_id);
        verdict.judge_failed = true;
        return verdict;
    }
    verdict.label = reply->label;
    verdict.rationale = reply->rationale;
    return verdict;
}

CoverageReply parse_coverage_reply(std::string_view reply, std::size_t n_claims) {
    CoverageReply out;
    auto parsed = prompts::parse_strict_json(reply);
    if (!parsed || !parsed->is_object() || parsed->size() != 2 || !parsed->contains("label") ||
        !parsed->contains("evidence_claim_ids")) {
        return out;
    }
    const auto& label = parsed->at("label");
    const auto& ids = parsed->at("evidence_claim_ids");
    if (!label.is_string() || !ids.is_array()) return out;
    auto parsed_label = parse_coverage_label(label.get<std::string>());
    if (!parsed_label) return out;
    for (const auto& id : ids) {
        if (!id.is_number_integer()) return out;
    }

    out.label = *parsed_label;
    if (out.label == CoverageLabel::NotCovered) {
        if (!ids.empty()) out.warnings.push_back("NOT_COVERED reply listed evidence ids; list cleared");
        out.valid = true;
        return out;
    }
    if (ids.empty()) return out;
    for (const auto& id : ids) {
        auto v = id.get<long long>();
        if (v < 1 || static_cast<std::size_t>(v) > n_claims) {
            out.warnings.push_back(fmt::format("evidence id {} outside 1..{} dropped", v, n_claims));
            continue;
        }
        if (std::find(out.evidence_claim_ids.begin(), out.evidence_claim_ids.end(), v) == out.evidence_claim_ids.end()) {
            out.evidence_claim_ids.push_back(static_cast<int>(v));
        }
    }
    if (out.evidence_claim_ids.empty()) {
        out.warnings.push_back("COVERED reply had no valid evidence ids; labeled NOT_COVERED");
        out.label = CoverageLabel::NotCovered;
    }
    out.valid = true;
    return out;
}

FactCoverage check_coverage(const AtomicFact& fact, const std::vector<AtomicClaim>& claims, Gateway& gateway,
                            const CoverageOptions& options) {
    FactCoverage coverage{fact.fact_id, CoverageLabel::NotCovered, {}, false};
    if (claims.empty()) return coverage;

    std::vector<std::string> lines;
    lines.reserve(claims.size());
    for (const auto& c : claims) lines.push_back(c.text);
    auto req = judge_request(
        options.llm,
        prompts::render(prompts::kCoverage, {{"fact", fact.text}, {"claims_block", prompts::numbered_block(lines)}}),
        RequestTag::CoverageJudge);
    auto reply = parse_coverage_reply(gateway.chat(req).text, claims.size());
    if (!reply.valid) {
        req.user_text += prompts::kJsonReminder;
        reply = parse_coverage_reply(gateway.chat(req).text, claims.size());
    }
    for (const auto& w : reply.warnings) spdlog::warn("fact {}: {}", fact.fact_id, w);
    if (!reply.valid) {
        spdlog::warn("fact {}: coverage reply invalid after retry; labeled NOT_COVERED", fact.fact_id);
        coverage.judge_failed = true;
        return coverage;
    }
    coverage.label = reply.label;
    coverage.evidence_claim_indices = std::move(reply.evidence_claim_ids);
    return coverage;
}

std::vector<AtomicClaim> response_sentences_as_claims(std::string_view prompt_id, std::string_view response) {
    std::vector<AtomicClaim> out;
    for (auto& s : split_sentences(response)) {
        int index = static_cast<int>(out.size()) + 1;
        out.push_back({make_id(prompt_id, "sentence", static_cast<std::size_t>(index)), index, std::move(s)});
    }
    return out;
}

}  // namespace factrec
