#pragma once
// Decomposes a model response into atomic claims, one extraction call per
// sentence window.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "factrec/gateway.hpp"
#include "factrec/model.hpp"
#include "factrec/reference.hpp"

namespace factrec {

/// Splits prose into sentences at . ! ? (followed by whitespace or end of
/// text) and at line breaks. Common abbreviations, initials and decimal
/// numbers do not end a sentence.
std::vector<std::string> split_sentences(std::string_view text);

struct SentenceWindow {
    std::size_t sentence_index = 0;  // 0-based target sentence
    std::string text;                // context with the target wrapped in <SOS>...<EOS>
};

std::vector<SentenceWindow> sentence_windows(const std::vector<std::string>& sentences, std::size_t before,
                                             std::size_t after);

struct ClaimOptions {
    LlmCallOptions llm;
    std::size_t context_before = 1;
    std::size_t context_after = 1;
    std::size_t max_workers = 4;
};

struct ClaimExtraction {
    std::vector<AtomicClaim> claims;
    std::size_t skipped_windows = 0;
    std::vector<std::string> warnings;
};

/// Claims in document order, exact duplicates removed (first kept), indexed
/// 1..L with ids "{prompt_id}:claim:{i}". Throws EmptyResponse on blank input.
ClaimExtraction extract_claims(std::string_view prompt_id, std::string_view response, Gateway& gateway,
                               const ClaimOptions& options);

}  // namespace factrec
