#pragma once
// Builds the importance-ranked should-include reference set for one query:
// fact extraction per passage, near-duplicate clustering, relevance and
// salience scoring, and budgeted selection.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "factrec/gateway.hpp"
#include "factrec/model.hpp"
#include "factrec/retrieval.hpp"

namespace factrec {

struct LlmCallOptions {
    std::string model = "gpt-4o-mini";
    int max_tokens = 2048;
};

// --- extraction ----------------------------------------------------------------

struct FactExtraction {
    std::vector<AtomicFact> facts;  // fact_id left empty; see assign_fact_ids
    bool skipped = false;           // reply unparseable even after the re-ask
    std::vector<std::string> warnings;
};

FactExtraction extract_facts(const PassageChunk& chunk, Gateway& gateway, const LlmCallOptions& options);

/// Sets fact_id = "{prompt_id}:fact:{n}" with n counting from 1 in order.
void assign_fact_ids(std::string_view prompt_id, std::vector<AtomicFact>& facts);

// --- dedup -----------------------------------------------------------------------

enum class SimilarityKind { EmbeddingCosine, CharTrigramJaccard };
enum class CanonicalRule { LongestText, HighestSpecificity };

std::string_view to_string(SimilarityKind kind);
std::string_view to_string(CanonicalRule rule);
std::optional<SimilarityKind> parse_similarity_kind(std::string_view s);
std::optional<CanonicalRule> parse_canonical_rule(std::string_view s);

struct DedupConfig {
    SimilarityKind similarity = SimilarityKind::EmbeddingCosine;
    double tau = 0.85;  // merge while average-linkage similarity >= tau
    CanonicalRule canonical_rule = CanonicalRule::LongestText;
    std::string embedding_model = "text-embedding-3-small";

    void validate() const;
};

void to_json(json& j, const DedupConfig& v);
void from_json(const json& j, DedupConfig& v);

using SimilarityMatrix = std::vector<std::vector<double>>;

/// Jaccard similarity of the sets of lowercased byte 3-grams. Texts shorter
/// than three bytes contribute themselves as a single gram.
double trigram_jaccard(std::string_view a, std::string_view b);

SimilarityMatrix jaccard_matrix(const std::vector<AtomicFact>& facts);

/// Average-linkage agglomerative clustering: repeatedly merges the most
/// similar pair of clusters while their similarity is >= tau. Ties go to the
/// pair with the smallest (first-member, second-member) indices. Clusters are
/// returned as ascending member lists ordered by their first member.
std::vector<std::vector<std::size_t>> agglomerate(const SimilarityMatrix& sim, double tau);

/// Index of the canonical member of a cluster.
std::size_t pick_canonical(const std::vector<AtomicFact>& facts, const std::vector<std::size_t>& members,
                           CanonicalRule rule);

/// One clustering pass over a precomputed similarity matrix. Byte-identical
/// texts are treated as similarity 1.
std::vector<AtomicFact> dedup_with_similarity(const std::vector<AtomicFact>& facts, SimilarityMatrix sim,
                                              const DedupConfig& cfg);

struct DedupResult {
    std::vector<AtomicFact> facts;
    bool used_fallback = false;  // embedding failed and Jaccard was used
};

/// Clusters near-duplicates and keeps one canonical fact per cluster,
/// repeating passes until no cluster merges (so the result is a fixpoint).
/// gateway may be null for Jaccard similarity.
DedupResult dedup_facts(const std::vector<AtomicFact>& facts, const DedupConfig& cfg, Gateway* gateway);

// --- importance ------------------------------------------------------------------

/// (r - 1) / 4 for a rating on the 1..5 scale.
double normalize_rating(int rating);

double importance_score(int relevance_raw, int salience_raw, const ImportanceConfig& cfg);

/// Sets raw, normalized and composite scores on a fact.
void apply_scores(AtomicFact& fact, int relevance_raw, int salience_raw, const ImportanceConfig& cfg);

/// Recomputes importance for every fact under a different weighting.
std::vector<AtomicFact> rescore(std::vector<AtomicFact> facts, const ImportanceConfig& cfg);

struct ImportanceReply {
    std::vector<std::optional<std::pair<int, int>>> scores;  // per 1-based id, slot 0 = id 1
    bool valid_json = false;
    std::vector<std::string> warnings;
};

/// Parses the scorer's JSON array for a batch of n sentences. Ratings outside
/// 1..5 are clamped with a warning; unusable entries stay empty.
ImportanceReply parse_importance_reply(std::string_view reply, std::size_t n);

struct ScoringOptions {
    LlmCallOptions llm;
    std::size_t batch_size = 40;
};

/// Scores every fact through the relevance/salience judge. Facts the judge
/// fails to score get (3, 3) and score_defaulted = true.
std::vector<AtomicFact> score_importance(std::vector<AtomicFact> facts, std::string_view query,
                                         const ImportanceConfig& cfg, Gateway& gateway,
                                         const ScoringOptions& options);

// --- selection -------------------------------------------------------------------

/// Orders by importance descending (ties by ascending fact_id) then applies
/// the rule. Throws EmptyReferenceSet when nothing survives.
ReferenceSet form_reference_set(std::string_view prompt_id, std::vector<AtomicFact> facts, const SelectionRule& rule);

}  // namespace factrec
