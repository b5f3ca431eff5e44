#pragma once
// Evidence retrieval: a local BM25 corpus, precomputed evidence files and an
// HTTP search adapter behind one interface, plus passage chunking.

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "factrec/model.hpp"

namespace factrec {

/// Lowercased tokens split on ASCII whitespace and punctuation. Bytes >= 0x80
/// are kept inside tokens so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

struct CorpusDoc {
    std::string doc_id;
    std::string title;
    std::string text;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

class Bm25Index {
public:
    struct Hit {
        std::size_t doc = 0;
        double score = 0.0;
    };

    /// Throws EmptyCorpus for no documents and MalformedCorpusRecord for a
    /// repeated doc_id.
    static Bm25Index build(std::vector<CorpusDoc> docs, Bm25Params params = {});

    /// Reads {"doc_id", "title", "text"} JSON Lines.
    static Bm25Index from_jsonl(const std::filesystem::path& path, Bm25Params params = {});

    /// Documents with a positive score, best first; ties by ascending doc_id.
    [[nodiscard]] std::vector<Hit> search(std::string_view query, std::size_t k) const;
    [[nodiscard]] double score(std::string_view query, std::size_t doc) const;

    [[nodiscard]] const CorpusDoc& doc(std::size_t i) const { return docs_.at(i); }
    [[nodiscard]] std::size_t size() const noexcept { return docs_.size(); }

private:
    struct Posting {
        std::size_t doc;
        int tf;
    };

    double idf(std::size_t df) const;

    Bm25Params params_;
    std::vector<CorpusDoc> docs_;
    std::vector<std::size_t> doc_len_;
    double avgdl_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// Builds the index for a corpus file; same as Bm25Index::from_jsonl.
Bm25Index build_local_index(const std::filesystem::path& corpus_path);

enum class SourceKind { LocalCorpus, PrecomputedEvidence, SearchAdapter };

std::string_view to_string(SourceKind kind);
std::optional<SourceKind> parse_source_kind(std::string_view s);

struct KnowledgeSourceConfig {
    SourceKind kind = SourceKind::LocalCorpus;
    int top_k = 5;
    std::string location;  // corpus path, evidence path or endpoint URL
    std::size_t chunk_chars = 3000;
    std::string source_name = "local_corpus";
};

void to_json(json& j, const KnowledgeSourceConfig& v);
void from_json(const json& j, KnowledgeSourceConfig& v);

class KnowledgeSource {
public:
    virtual ~KnowledgeSource() = default;
    /// At most top_k documents ranked 1..n. An empty set is a valid answer.
    [[nodiscard]] virtual EvidenceSet retrieve(const EvalPrompt& prompt) const = 0;
};

class LocalCorpusSource : public KnowledgeSource {
public:
    LocalCorpusSource(Bm25Index index, int top_k, std::string source_name);
    [[nodiscard]] EvidenceSet retrieve(const EvalPrompt& prompt) const override;

private:
    Bm25Index index_;
    int top_k_;
    std::string source_name_;
};

/// Evidence fetched elsewhere: {"prompt_id", "docs": [{"doc_id", "source_name", "text", "rank"}]}.
class PrecomputedEvidenceSource : public KnowledgeSource {
public:
    PrecomputedEvidenceSource(const std::filesystem::path& path, int top_k);
    [[nodiscard]] EvidenceSet retrieve(const EvalPrompt& prompt) const override;

private:
    std::map<std::string, std::vector<EvidenceDoc>> by_prompt_;
    int top_k_;
};

/// POSTs {"query", "top_k"} to an endpoint answering {"docs": [EvidenceDoc...]}.
class SearchAdapterSource : public KnowledgeSource {
public:
    SearchAdapterSource(std::string endpoint, int top_k, std::string source_name);
    [[nodiscard]] EvidenceSet retrieve(const EvalPrompt& prompt) const override;

private:
    std::string endpoint_;
    int top_k_;
    std::string source_name_;
};

std::unique_ptr<KnowledgeSource> make_knowledge_source(const KnowledgeSourceConfig& cfg);

struct PassageChunk {
    std::string doc_id;
    std::string text;
    std::size_t offset = 0;  // byte offset of text within the source doc
};

/// Packs paragraphs greedily into chunks of at most chunk_chars bytes and
/// hard-splits any paragraph that is longer on its own.
std::vector<PassageChunk> chunk_text(const std::string& doc_id, const std::string& text, std::size_t chunk_chars);
std::vector<PassageChunk> chunk_documents(const EvidenceSet& evidence, std::size_t chunk_chars);

}  // namespace factrec
