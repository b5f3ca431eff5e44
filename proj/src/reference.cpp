#include "factrec/reference.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "factrec/error.hpp"
#include "factrec/parallel.hpp"
#include "factrec/prompts.hpp"

namespace factrec {

// --- extraction ----------------------------------------------------------------

FactExtraction extract_facts(const PassageChunk& chunk, Gateway& gateway, const LlmCallOptions& options) {
    if (chunk.text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw Error(ErrorCode::PreconditionViolated, "extract_facts on an empty chunk");
    }
    ChatRequest req;
    req.model_name = options.model;
    req.user_text = prompts::render(prompts::kFactExtraction, {{"context", chunk.text}});
    req.temperature = 0.0;
    req.max_tokens = options.max_tokens;
    req.request_tag = RequestTag::FactExtract;

    FactExtraction out;
    auto parsed = prompts::parse_bullet_list(gateway.chat(req).text);
    if (!parsed.parseable) {
        req.user_text += prompts::kBulletReminder;
        parsed = prompts::parse_bullet_list(gateway.chat(req).text);
    }
    if (!parsed.parseable) {
        out.skipped = true;
        out.warnings.push_back(fmt::format("doc {} @{}: fact list unparseable after re-ask; chunk skipped",
                                           chunk.doc_id, chunk.offset));
        return out;
    }
    if (parsed.items.empty()) {
        out.warnings.push_back(fmt::format("doc {} @{}: extractor returned no facts", chunk.doc_id, chunk.offset));
    }
    for (auto& item : parsed.items) {
        AtomicFact fact;
        fact.text = std::move(item);
        fact.source_doc_ids = {chunk.doc_id};
        out.facts.push_back(std::move(fact));
    }
    return out;
}

void assign_fact_ids(std::string_view prompt_id, std::vector<AtomicFact>& facts) {
    for (std::size_t i = 0; i < facts.size(); ++i) facts[i].fact_id = make_id(prompt_id, "fact", i + 1);
}

// --- dedup -----------------------------------------------------------------------

std::string_view to_string(SimilarityKind kind) {
    return kind == SimilarityKind::EmbeddingCosine ? "embedding_cosine" : "char3_jaccard";
}

std::string_view to_string(CanonicalRule rule) {
    return rule == CanonicalRule::LongestText ? "longest_text" : "highest_specificity";
}

std::optional<SimilarityKind> parse_similarity_kind(std::string_view s) {
    if (s == "embedding_cosine" || s == "embedding") return SimilarityKind::EmbeddingCosine;
    if (s == "char3_jaccard" || s == "jaccard") return SimilarityKind::CharTrigramJaccard;
    return std::nullopt;
}

std::optional<CanonicalRule> parse_canonical_rule(std::string_view s) {
    if (s == "longest_text") return CanonicalRule::LongestText;
    if (s == "highest_specificity") return CanonicalRule::HighestSpecificity;
    return std::nullopt;
}

void DedupConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw Error(ErrorCode::InvalidRecord, fmt::format("dedup tau must lie in (0, 1), got {}", tau));
    }
}

void to_json(json& j, const DedupConfig& v) {
    j = json{{"similarity", to_string(v.similarity)},
             {"linkage", "average"},
             {"tau", v.tau},
             {"canonical_rule", to_string(v.canonical_rule)},
             {"embedding_model", v.embedding_model}};
}

void from_json(const json& j, DedupConfig& v) {
    auto sim = parse_similarity_kind(j.value("similarity", std::string("embedding_cosine")));
    auto rule = parse_canonical_rule(j.value("canonical_rule", std::string("longest_text")));
    if (!sim || !rule) throw Error(ErrorCode::FatalConfigError, "unknown dedup similarity or canonical rule");
    if (j.value("linkage", std::string("average")) != "average") {
        throw Error(ErrorCode::FatalConfigError, "only average linkage is supported");
    }
    v.similarity = *sim;
    v.canonical_rule = *rule;
    v.tau = j.value("tau", 0.85);
    v.embedding_model = j.value("embedding_model", v.embedding_model);
}

namespace {

std::set<std::string> trigrams(std::string_view s) {
    std::string lower(s);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::set<std::string> grams;
    if (lower.size() < 3) {
        grams.insert(lower);
        return grams;
    }
    for (std::size_t i = 0; i + 3 <= lower.size(); ++i) grams.insert(lower.substr(i, 3));
    return grams;
}

std::size_t count_tokens(std::string_view s) {
    std::size_t n = 0;
    bool in = false;
    for (char c : s) {
        bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in) ++n;
        in = !space;
    }
    return n;
}

std::size_t specificity(std::string_view s) {
    std::size_t score = 0;
    std::size_t pos = 0;
    bool first = true;
    while (pos < s.size()) {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        std::size_t start = pos;
        while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (start == pos) break;
        std::string_view tok = s.substr(start, pos - start);
        bool digit = std::any_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
        bool capital = !first && std::isupper(static_cast<unsigned char>(tok.front()));
        if (digit || capital) ++score;
        first = false;
    }
    return score;
}

}  // namespace

double trigram_jaccard(std::string_view a, std::string_view b) {
    auto ga = trigrams(a);
    auto gb = trigrams(b);
    std::size_t inter = 0;
    for (const auto& g : ga) inter += gb.count(g);
    std::size_t uni = ga.size() + gb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

SimilarityMatrix jaccard_matrix(const std::vector<AtomicFact>& facts) {
    const std::size_t n = facts.size();
    SimilarityMatrix sim(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            sim[i][j] = sim[j][i] = trigram_jaccard(facts[i].text, facts[j].text);
        }
    }
    return sim;
}

std::vector<std::vector<std::size_t>> agglomerate(const SimilarityMatrix& sim, double tau) {
    const std::size_t n = sim.size();
    // Slot i always holds the cluster whose smallest member is i.
    SimilarityMatrix link = sim;
    std::vector<std::vector<std::size_t>> members(n);
    std::vector<bool> active(n, true);
    for (std::size_t i = 0; i < n; ++i) members[i] = {i};

    while (true) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t bi = n, bj = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (active[j] && link[i][j] > best) {
                    best = link[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        if (bi == n || best < tau) break;

        // Average linkage update (Lance-Williams).
        const double ni = static_cast<double>(members[bi].size());
        const double nj = static_cast<double>(members[bj].size());
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == bi || k == bj) continue;
            link[bi][k] = link[k][bi] = (ni * link[bi][k] + nj * link[bj][k]) / (ni + nj);
        }
        members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
        std::sort(members[bi].begin(), members[bi].end());
        members[bj].clear();
        active[bj] = false;
    }

    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (active[i]) out.push_back(std::move(members[i]));
    }
    return out;
}

std::size_t pick_canonical(const std::vector<AtomicFact>& facts, const std::vector<std::size_t>& members,
                           CanonicalRule rule) {
    auto better = [&](std::size_t a, std::size_t b) {
        if (rule == CanonicalRule::HighestSpecificity) {
            auto sa = specificity(facts[a].text), sb = specificity(facts[b].text);
            if (sa != sb) return sa > sb;
        }
        auto ta = count_tokens(facts[a].text), tb = count_tokens(facts[b].text);
        if (ta != tb) return ta > tb;
        if (facts[a].fact_id != facts[b].fact_id) return facts[a].fact_id < facts[b].fact_id;
        return a < b;
    };
    return *std::min_element(members.begin(), members.end(), [&](std::size_t a, std::size_t b) { return better(a, b); });
}

std::vector<AtomicFact> dedup_with_similarity(const std::vector<AtomicFact>& facts, SimilarityMatrix sim,
                                              const DedupConfig& cfg) {
    cfg.validate();
    const std::size_t n = facts.size();
    if (sim.size() != n) throw Error(ErrorCode::MisalignedInputs, "similarity matrix size differs from fact count");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (facts[i].text == facts[j].text) sim[i][j] = sim[j][i] = 1.0;
        }
    }

    std::vector<AtomicFact> out;
    int cluster_id = 1;
    for (const auto& cluster : agglomerate(sim, cfg.tau)) {
        AtomicFact canonical = facts[pick_canonical(facts, cluster, cfg.canonical_rule)];
        std::vector<std::string> sources;
        for (auto m : cluster) {
            for (const auto& d : facts[m].source_doc_ids) {
                if (std::find(sources.begin(), sources.end(), d) == sources.end()) sources.push_back(d);
            }
        }
        canonical.source_doc_ids = std::move(sources);
        canonical.cluster_id = cluster_id++;
        out.push_back(std::move(canonical));
    }
    return out;
}

DedupResult dedup_facts(const std::vector<AtomicFact>& facts, const DedupConfig& cfg, Gateway* gateway) {
    cfg.validate();
    if (facts.empty()) throw Error(ErrorCode::PreconditionViolated, "dedup_facts on an empty fact list");

    DedupResult result;
    auto similarity = [&](const std::vector<AtomicFact>& current) -> SimilarityMatrix {
        if (cfg.similarity == SimilarityKind::EmbeddingCosine && !result.used_fallback) {
            try {
                if (gateway == nullptr) throw Error(ErrorCode::PreconditionViolated, "no gateway for embeddings");
                std::vector<std::string> texts;
                texts.reserve(current.size());
                for (const auto& f : current) texts.push_back(f.text);
                auto vecs = gateway->embed(texts, cfg.embedding_model);
                SimilarityMatrix sim(current.size(), std::vector<double>(current.size(), 1.0));
                for (std::size_t i = 0; i < current.size(); ++i) {
                    for (std::size_t j = i + 1; j < current.size(); ++j) {
                        sim[i][j] = sim[j][i] = cosine(vecs[i], vecs[j]);
                    }
                }
                return sim;
            } catch (const Error& e) {
                spdlog::info("embedding similarity unavailable ({}); falling back to 3-gram Jaccard", e.what());
                result.used_fallback = true;
            }
        }
        return jaccard_matrix(current);
    };

    std::vector<AtomicFact> current = facts;
    while (true) {
        auto next = dedup_with_similarity(current, similarity(current), cfg);
        bool merged = next.size() < current.size();
        current = std::move(next);
        if (!merged) break;
    }
    result.facts = std::move(current);
    return result;
}

// --- importance ------------------------------------------------------------------

double normalize_rating(int rating) {
    return static_cast<double>(rating - 1) / 4.0;
}

double importance_score(int relevance_raw, int salience_raw, const ImportanceConfig& cfg) {
    return cfg.alpha * normalize_rating(relevance_raw) + cfg.beta * normalize_rating(salience_raw);
}

void apply_scores(AtomicFact& fact, int relevance_raw, int salience_raw, const ImportanceConfig& cfg) {
    fact.relevance_raw = relevance_raw;
    fact.salience_raw = salience_raw;
    fact.relevance_norm = normalize_rating(relevance_raw);
    fact.salience_norm = normalize_rating(salience_raw);
    fact.importance = importance_score(relevance_raw, salience_raw, cfg);
}

std::vector<AtomicFact> rescore(std::vector<AtomicFact> facts, const ImportanceConfig& cfg) {
    cfg.validate();
    for (auto& f : facts) apply_scores(f, f.relevance_raw, f.salience_raw, cfg);
    return facts;
}

namespace {

std::optional<int> rating_of(const json& v, std::string_view name, std::vector<std::string>& warnings) {
    if (!v.is_number()) return std::nullopt;
    double d = v.get<double>();
    if (!std::isfinite(d) || std::floor(d) != d) return std::nullopt;
    if (d < 1.0 || d > 5.0) {
        warnings.push_back(fmt::format("{} rating {} out of range; clamped to [1,5]", name, d));
        d = std::clamp(d, 1.0, 5.0);
    }
    return static_cast<int>(d);
}

}  // namespace

ImportanceReply parse_importance_reply(std::string_view reply, std::size_t n) {
    ImportanceReply out;
    out.scores.assign(n, std::nullopt);
    auto parsed = prompts::parse_strict_json(reply);
    if (!parsed || !parsed->is_array()) return out;
    out.valid_json = true;
    for (const auto& entry : *parsed) {
        if (!entry.is_object() || !entry.contains("id") || !entry.at("id").is_number_integer()) {
            out.warnings.push_back("score entry without an integer id ignored");
            continue;
        }
        auto id = entry.at("id").get<long long>();
        if (id < 1 || static_cast<std::size_t>(id) > n) {
            out.warnings.push_back(fmt::format("score entry id {} outside 1..{} ignored", id, n));
            continue;
        }
        auto r = rating_of(entry.value("relevance", json()), "relevance", out.warnings);
        auto s = rating_of(entry.value("salience", json()), "salience", out.warnings);
        if (!r || !s) {
            out.warnings.push_back(fmt::format("score entry id {} lacks integer ratings", id));
            continue;
        }
        auto& slot = out.scores[static_cast<std::size_t>(id - 1)];
        if (slot) {
            out.warnings.push_back(fmt::format("duplicate score entry for id {} ignored", id));
            continue;
        }
        slot = std::make_pair(*r, *s);
    }
    return out;
}

std::vector<AtomicFact> score_importance(std::vector<AtomicFact> facts, std::string_view query,
                                         const ImportanceConfig& cfg, Gateway& gateway,
                                         const ScoringOptions& options) {
    cfg.validate();
    if (facts.empty()) throw Error(ErrorCode::PreconditionViolated, "score_importance on an empty fact list");
    const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);
    const std::size_t n_batches = (facts.size() + batch - 1) / batch;

    parallel_for(n_batches, gateway.options().max_in_flight, [&](std::size_t b) {
        const std::size_t lo = b * batch;
        const std::size_t hi = std::min(facts.size(), lo + batch);
        std::vector<std::string> sentences;
        for (std::size_t i = lo; i < hi; ++i) sentences.push_back(facts[i].text);

        ChatRequest req;
        req.model_name = options.llm.model;
        req.user_text = prompts::render(prompts::kImportance,
                                        {{"query", std::string(query)}, {"sentence_list", prompts::numbered_block(sentences)}});
        req.temperature = 0.0;
        req.max_tokens = options.llm.max_tokens;
        req.request_tag = RequestTag::ImportanceJudge;

        auto first = parse_importance_reply(gateway.chat(req).text, sentences.size());
        auto merged = first;
        bool complete = first.valid_json &&
                        std::all_of(first.scores.begin(), first.scores.end(), [](const auto& s) { return s.has_value(); });
        if (!complete) {
            req.user_text += prompts::kJsonReminder;
            auto second = parse_importance_reply(gateway.chat(req).text, sentences.size());
            for (std::size_t i = 0; i < sentences.size(); ++i) {
                if (second.scores[i]) merged.scores[i] = second.scores[i];
            }
            merged.warnings.insert(merged.warnings.end(), second.warnings.begin(), second.warnings.end());
        }
        for (const auto& w : merged.warnings) spdlog::warn("importance scoring: {}", w);
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& s = merged.scores[i - lo];
            if (s) {
                apply_scores(facts[i], s->first, s->second, cfg);
            } else {
                spdlog::warn("fact {}: no usable relevance/salience score; defaulting to (3, 3)", facts[i].fact_id);
                apply_scores(facts[i], 3, 3, cfg);
                facts[i].score_defaulted = true;
            }
        }
    });
    return facts;
}

// --- selection -------------------------------------------------------------------

ReferenceSet form_reference_set(std::string_view prompt_id, std::vector<AtomicFact> facts, const SelectionRule& rule) {
    rule.validate();
    std::stable_sort(facts.begin(), facts.end(), [](const AtomicFact& a, const AtomicFact& b) {
        if (a.importance != b.importance) return a.importance > b.importance;
        return a.fact_id < b.fact_id;
    });
    switch (rule.mode) {
        case SelectionMode::TopK:
            if (facts.size() > static_cast<std::size_t>(*rule.k_star)) facts.resize(static_cast<std::size_t>(*rule.k_star));
            break;
        case SelectionMode::Threshold:
            facts.erase(std::remove_if(facts.begin(), facts.end(),
                                       [&](const AtomicFact& f) { return f.importance < *rule.min_importance; }),
                        facts.end());
            break;
        case SelectionMode::All: break;
    }
    if (facts.empty()) {
        throw Error(ErrorCode::EmptyReferenceSet, fmt::format("prompt {}: selection {} keeps no facts", prompt_id, rule.label()));
    }
    return ReferenceSet{std::string(prompt_id), std::move(facts), rule};
}

}  // namespace factrec
