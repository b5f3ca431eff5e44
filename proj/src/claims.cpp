#include "factrec/claims.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "factrec/error.hpp"
#include "factrec/parallel.hpp"
#include "factrec/prompts.hpp"

namespace factrec {

namespace {

constexpr std::array<std::string_view, 24> kAbbreviations = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e", "inc",
    "ltd", "co", "corp", "no", "vol", "fig", "approx", "u.s", "u.k", "gen"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// The word ending at position `dot` (exclusive), lowercased.
std::string word_before(std::string_view text, std::size_t dot) {
    std::size_t b = dot;
    while (b > 0 && !is_space(text[b - 1]) && text[b - 1] != '(' && text[b - 1] != '"') --b;
    std::string w(text.substr(b, dot - b));
    for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return w;
}

// "o.c", "u.s.a": single letters joined by dots.
bool is_dotted_acronym(std::string_view w) {
    if (w.size() < 3) return false;
    for (std::size_t i = 0; i < w.size(); ++i) {
        bool letter_slot = i % 2 == 0;
        if (letter_slot ? !std::isalpha(static_cast<unsigned char>(w[i])) : w[i] != '.') return false;
    }
    return w.size() % 2 == 1;
}

bool ends_sentence(std::string_view text, std::size_t i) {
    char c = text[i];
    if (c != '.' && c != '!' && c != '?') return false;
    // Let closing quotes and brackets ride along with the terminator.
    std::size_t j = i + 1;
    while (j < text.size() && (text[j] == '"' || text[j] == '\'' || text[j] == ')' || text[j] == ']')) ++j;
    if (j < text.size() && !is_space(text[j])) return false;
    if (c != '.') return true;
    std::string w = word_before(text, i);
    if (w.size() == 1 && std::isalpha(static_cast<unsigned char>(w[0]))) return false;  // initial
    if (is_dotted_acronym(w)) {
        // "The O.C. (2003)" runs on; "in the U.S. He" ends.
        while (j < text.size() && is_space(text[j])) ++j;
        return j < text.size() && std::isupper(static_cast<unsigned char>(text[j]));
    }
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), w) == kAbbreviations.end();
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    auto flush = [&](std::size_t end) {
        auto s = trim(text.substr(start, end - start));
        if (!s.empty()) out.emplace_back(s);
        start = end;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\n') {
            flush(i + 1);
        } else if (ends_sentence(text, i)) {
            std::size_t j = i + 1;
            while (j < text.size() && !is_space(text[j])) ++j;
            flush(j);
            i = j - 1;
        }
    }
    flush(text.size());
    return out;
}

std::vector<SentenceWindow> sentence_windows(const std::vector<std::string>& sentences, std::size_t before,
                                             std::size_t after) {
    std::vector<SentenceWindow> out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        std::string text;
        for (std::size_t k = i - std::min(i, before); k < i; ++k) text += sentences[k] + " ";
        text += "<SOS>" + sentences[i] + "<EOS>";
        for (std::size_t k = i + 1; k < sentences.size() && k <= i + after; ++k) text += " " + sentences[k];
        out.push_back({i, std::move(text)});
    }
    return out;
}

ClaimExtraction extract_claims(std::string_view prompt_id, std::string_view response, Gateway& gateway,
                               const ClaimOptions& options) {
    if (trim(response).empty()) {
        throw Error(ErrorCode::EmptyResponse, fmt::format("prompt {} has an empty response", prompt_id));
    }
    auto windows = sentence_windows(split_sentences(response), options.context_before, options.context_after);

    std::vector<std::optional<std::vector<std::string>>> per_window(windows.size());
    parallel_for(windows.size(), options.max_workers, [&](std::size_t w) {
        ChatRequest req;
        req.model_name = options.llm.model;
        req.user_text = prompts::render(prompts::kClaimExtraction, {{"window", windows[w].text}});
        req.temperature = 0.0;
        req.max_tokens = options.llm.max_tokens;
        req.request_tag = RequestTag::ClaimExtract;
        auto parsed = prompts::parse_bullet_list(gateway.chat(req).text);
        if (!parsed.parseable) {
            req.user_text += prompts::kBulletReminder;
            parsed = prompts::parse_bullet_list(gateway.chat(req).text);
        }
        if (parsed.parseable) per_window[w] = std::move(parsed.items);
    });

    ClaimExtraction out;
    std::set<std::string> seen;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        if (!per_window[w]) {
            ++out.skipped_windows;
            out.warnings.push_back(fmt::format("prompt {}: claim reply for sentence {} unparseable after re-ask; window skipped",
                                               prompt_id, windows[w].sentence_index + 1));
            continue;
        }
        for (auto& text : *per_window[w]) {
            if (!seen.insert(text).second) continue;
            int index = static_cast<int>(out.claims.size()) + 1;
            out.claims.push_back({make_id(prompt_id, "claim", static_cast<std::size_t>(index)), index, std::move(text)});
        }
    }
    for (const auto& w : out.warnings) spdlog::warn("{}", w);
    return out;
}

}  // namespace factrec
