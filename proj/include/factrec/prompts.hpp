#pragma once
// Prompt templates and reply-parsing helpers shared by the extractors and
// judges. Placeholders are written {name}; any other brace is literal text.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace factrec::prompts {

/// Fact generation from one evidence passage. Slot: {context}.
extern const std::string_view kFactExtraction;

/// Fact coverage against a numbered claim list. Slots: {fact}, {claims_block}.
extern const std::string_view kCoverage;

/// Relevance and salience scoring for a batch of facts. Slots: {query}, {sentence_list}.
extern const std::string_view kImportance;

/// Claim extraction for one sentence window; the target sentence is
/// wrapped in <SOS>...<EOS>. Slot: {window}.
extern const std::string_view kClaimExtraction;

/// Three-way claim verification against evidence. Slots: {claim}, {evidence}.
extern const std::string_view kVerification;

/// Appended to a fact or claim extraction prompt when the first reply had no bullet list.
extern const std::string_view kBulletReminder;
/// Appended to a judge prompt when the first reply was not valid JSON.
extern const std::string_view kJsonReminder;

/// Sentinel reply meaning "this sentence has no verifiable content".
extern const std::string_view kNoVerifiableClaim;

/// Replaces each {key} for keys present in values; one pass, no re-scanning
/// of substituted text.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// First 12 hex digits of the template's SHA-256.
std::string template_version(std::string_view tmpl);

/// "1. first\n2. second" with 1-based numbering.
std::string numbered_block(const std::vector<std::string>& lines);

/// Parses a reply that must be a single JSON value. Surrounding whitespace
/// and one Markdown code fence are tolerated; any other extra text is not.
std::optional<nlohmann::json> parse_strict_json(std::string_view reply);

struct BulletList {
    std::vector<std::string> items;
    bool parseable = false;  // false when the reply has neither bullets nor a "Facts:" header
};

/// Reads "- item", "* item", "• item" and "1. item" lines. A reply that is
/// only a "Facts:" header, or the no-verifiable-claim sentinel, parses to an
/// empty list.
BulletList parse_bullet_list(std::string_view reply);

}  // namespace factrec::prompts
