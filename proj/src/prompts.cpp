#include "factrec/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "factrec/hash.hpp"

namespace factrec::prompts {

const std::string_view kFactExtraction =
    R"PROMPT(You need to extract as many facts from the given "context" as possible. Output each fact in bullet-point format. Each of these facts should be generated directly from the "context", should be objective and factual, so avoid opinion-based sentences. Each fact should add new information and avoid redundancy. Each fact should be self-contained and make sense on its own. Choose facts that provide new insights or something unusual about the topic. Avoid general statements that apply to many things. A good fact should be specific and unique and contribute to the essential understanding of the topic.

Here is an example:

Context: Adam Jared Brody (born December 15, 1979) is an American actor. His breakout role was as Seth Cohen on the Fox television series The O.C. (2003–2007). For his performance as Noah in the Netflix romantic comedy series Nobody Wants This (2024), he earned a nomination for the Golden Globe Award for Best Actor in a Television Series (Musical/Comedy) and won the Critics' Choice Television Award for Best Actor in a Comedy Series.

Output:
Facts:
- Adam Jared Brody was born on December 15, 1979.
- Adam Brody's breakout role was as Seth Cohen on the Fox television series The O.C. (2003–2007).
- He earned a nomination for the Golden Globe Award for Best Actor in a Television Series (Musical/Comedy) for his performance as Noah in the Netflix romantic comedy series Nobody Wants This (2024).
- Brody won the Critics' Choice Television Award for Best Actor in a Comedy Series for his role in Nobody Wants This.

Context: {context}

Output:
)PROMPT";

const std::string_view kCoverage =
    R"PROMPT(You are checking whether a given fact is COVERED by a set of claim sentences (an answer).

Important:
- The fact is assumed to be TRUE. Do not question or evaluate its truth.
- Decide whether the fact is stated or clearly implied by the claim sentences.

Definitions:
- The fact is COVERED if the claim sentences clearly state or entail the fact. That means: if a careful reader had only these claim sentences and nothing else, they would be confident that the fact is true.
- The fact is NOT_COVERED if the claim sentences do not provide enough information to guarantee the fact. It is NOT_COVERED even if the fact seems plausible based on outside knowledge.

Notes:
- You may use multiple claim sentences together to decide if the fact is covered.
- Do not use any outside knowledge beyond the claim sentences.
- Be strict: if the claim sentences are compatible with the fact but do not actually say or entail it, label it NOT_COVERED.

Fact:
{fact}

Claim sentences (numbered, 1-based indices):
{claims_block}

Your tasks:
- Decide whether the fact is COVERED or NOT_COVERED by the claim sentences above.
- If and only if the fact is COVERED, list all claim IDs (1-based indices) that directly help cover/entail the fact. If NOT_COVERED, use an empty list.

Output strictly as JSON, with no extra text:
{
  "label": "COVERED" | "NOT_COVERED",
  "evidence_claim_ids": [<int>, ...]
}
)PROMPT";

const std::string_view kImportance =
    R"PROMPT(You are scoring each statement based on its relevance and salience to the given query.

Task:
Given a query and a list of sentences about that query, assign each sentence:
- a RELEVANCE rating from 1 to 5
- a SALIENCE rating from 1 to 5

Definitions:
- Relevance (1–5): how directly this sentence helps answer the query.
  1 = completely unrelated
  2 = weakly related
  3 = somewhat related
  4 = strongly related
  5 = directly answers the query or is crucial to the answer

- Salience (1–5): how important this sentence is for answering the query among all the sentences provided.
  1 = trivial detail, almost never needed
  2 = minor detail
  3 = useful but not central
  4 = important detail that should usually be included
  5 = essential; leaving it out would seriously harm the answer

Query:
{query}

Sentences:
{sentence_list}

Output strictly as a list of JSON objects with this schema, and do not include any text before or after the JSON.

Output:
[ {
  "id": <sentence_index>,
  "sentence": "<sentence text>",
  "relevance": <int 1-5>,
  "salience": <int 1-5>
}, ... ]
)PROMPT";

const std::string_view kClaimExtraction =
    R"PROMPT(You are trying to verify how factual a piece of text is. To do so, break down the sentence marked between <SOS> and <EOS> and extract as many fine-grained facts from it as possible. Each fact must be verifiable against reliable external world knowledge (for example, Wikipedia).

Do not extract stories, personal experiences, hypotheticals, subjective statements or opinions, suggestions, advice, instructions, or greetings. Biographical, historical, scientific and similar statements are verifiable and should be extracted.

Each fact should describe a single event or a single state, with its time and location when the text gives them. Each fact must be understandable on its own: refer to every entity by name rather than by pronoun, and use the surrounding sentences only as context to resolve pronouns and definite phrases. Keep each fact to one sentence. Keep quotations verbatim.

If the marked sentence contains no verifiable fact, answer exactly: No verifiable claim.

Otherwise answer in this format:
Facts:
- <fact>
- <fact>

Text:
{window}
)PROMPT";

const std::string_view kVerification =
    R"PROMPT(You are verifying whether a claim is supported by the evidence documents below.

Labels:
- SUPPORTED: the evidence states or clearly entails the claim.
- CONTRADICTED: the evidence states something that conflicts with the claim, for example a different date, number or name for the same thing.
- NOT_SUPPORTED: the evidence neither entails nor contradicts the claim.

Use only the evidence documents. Do not use outside knowledge.

Claim:
{claim}

Evidence documents:
{evidence}

Output strictly as JSON, with no extra text:
{
  "label": "SUPPORTED" | "CONTRADICTED" | "NOT_SUPPORTED",
  "rationale": "<one sentence>"
}
)PROMPT";

const std::string_view kBulletReminder = "\nOutput only the bullet list.\n";
const std::string_view kJsonReminder = "\nOutput only the JSON, with no other text.\n";
const std::string_view kNoVerifiableClaim = "No verifiable claim.";

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                std::string name(tmpl.substr(i + 1, close - i - 1));
                if (auto it = values.find(name); it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

std::string template_version(std::string_view tmpl) {
    return sha256_hex(tmpl).substr(0, 12);
}

std::string numbered_block(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i > 0) out.push_back('\n');
        out += std::to_string(i + 1) + ". " + lines[i];
    }
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<nlohmann::json> parse_strict_json(std::string_view reply) {
    std::string_view body = trim(reply);
    if (body.substr(0, 3) == "```") {
        auto first_nl = body.find('\n');
        if (first_nl == std::string_view::npos || body.size() < 6 || body.substr(body.size() - 3) != "```") {
            return std::nullopt;
        }
        body = trim(body.substr(first_nl + 1, body.size() - 3 - (first_nl + 1)));
    }
    if (body.empty()) return std::nullopt;
    try {
        return nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
        return std::nullopt;
    }
}

BulletList parse_bullet_list(std::string_view reply) {
    BulletList out;
    std::istringstream in{std::string(reply)};
    std::string raw;
    while (std::getline(in, raw)) {
        std::string_view line = trim(raw);
        if (line.empty()) continue;
        if (line == "Facts:" || line == "Claims:") {
            out.parseable = true;
            continue;
        }
        if (line == kNoVerifiableClaim || line == "No verifiable claim") {
            out.parseable = true;
            continue;
        }
        std::string_view item;
        if (line.substr(0, 2) == "- " || line.substr(0, 2) == "* ") {
            item = line.substr(2);
        } else if (line.substr(0, 3) == "•") {
            item = line.substr(3);
        } else {
            std::size_t d = 0;
            while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
            if (d > 0 && d + 1 < line.size() && (line[d] == '.' || line[d] == ')') && line[d + 1] == ' ') {
                item = line.substr(d + 2);
            } else {
                continue;
            }
        }
        item = trim(item);
        out.parseable = true;
        if (!item.empty()) out.items.emplace_back(item);
    }
    return out;
}

}  // namespace factrec::prompts
