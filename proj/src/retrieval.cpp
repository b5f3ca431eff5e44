#include "factrec/retrieval.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "factrec/error.hpp"

namespace factrec {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || std::isalnum(c)) {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// --- BM25 --------------------------------------------------------------------

Bm25Index Bm25Index::build(std::vector<CorpusDoc> docs, Bm25Params params) {
    if (docs.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus has no documents");
    std::unordered_set<std::string> ids;
    for (const auto& d : docs) {
        if (!ids.insert(d.doc_id).second) {
            throw Error(ErrorCode::MalformedCorpusRecord, fmt::format("duplicate doc_id '{}'", d.doc_id));
        }
    }

    Bm25Index index;
    index.params_ = params;
    index.docs_ = std::move(docs);
    index.doc_len_.reserve(index.docs_.size());
    double total = 0.0;
    for (std::size_t i = 0; i < index.docs_.size(); ++i) {
        const auto& d = index.docs_[i];
        auto tokens = tokenize(d.title + "\n" + d.text);
        std::map<std::string, int> tf;
        for (auto& t : tokens) ++tf[t];
        for (auto& [term, count] : tf) index.postings_[term].push_back({i, count});
        index.doc_len_.push_back(tokens.size());
        total += static_cast<double>(tokens.size());
    }
    index.avgdl_ = total / static_cast<double>(index.docs_.size());
    return index;
}

Bm25Index Bm25Index::from_jsonl(const std::filesystem::path& path, Bm25Params params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::SourceUnavailable, fmt::format("cannot open corpus {}", path.string()));
    std::vector<CorpusDoc> docs;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto where = [&] { return fmt::format("{}:{}", path.string(), lineno); };
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::MalformedCorpusRecord, fmt::format("{}: {}", where(), e.what()));
        }
        if (!rec.is_object() || !rec.contains("doc_id") || !rec.at("doc_id").is_string() || !rec.contains("text") ||
            !rec.at("text").is_string()) {
            throw Error(ErrorCode::MalformedCorpusRecord, fmt::format("{}: needs string doc_id and text", where()));
        }
        CorpusDoc doc{rec.at("doc_id").get<std::string>(), rec.value("title", std::string()),
                      rec.at("text").get<std::string>()};
        if (!seen.insert(doc.doc_id).second) {
            throw Error(ErrorCode::MalformedCorpusRecord, fmt::format("{}: duplicate doc_id '{}'", where(), doc.doc_id));
        }
        if (doc.text.empty()) {
            throw Error(ErrorCode::MalformedCorpusRecord, fmt::format("{}: empty text", where()));
        }
        docs.push_back(std::move(doc));
    }
    if (docs.empty()) throw Error(ErrorCode::EmptyCorpus, fmt::format("{} has no documents", path.string()));
    return build(std::move(docs), params);
}

Bm25Index build_local_index(const std::filesystem::path& corpus_path) {
    return Bm25Index::from_jsonl(corpus_path);
}

double Bm25Index::idf(std::size_t df) const {
    const double n = static_cast<double>(docs_.size());
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double Bm25Index::score(std::string_view query, std::size_t doc) const {
    auto terms = tokenize(query);
    std::set<std::string> unique(terms.begin(), terms.end());
    double s = 0.0;
    const double norm = 1.0 - params_.b + params_.b * static_cast<double>(doc_len_.at(doc)) / avgdl_;
    for (const auto& t : unique) {
        auto it = postings_.find(t);
        if (it == postings_.end()) continue;
        auto p = std::find_if(it->second.begin(), it->second.end(), [&](const Posting& x) { return x.doc == doc; });
        if (p == it->second.end()) continue;
        double tf = p->tf;
        s += idf(it->second.size()) * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
    }
    return s;
}

std::vector<Bm25Index::Hit> Bm25Index::search(std::string_view query, std::size_t k) const {
    auto terms = tokenize(query);
    std::set<std::string> unique(terms.begin(), terms.end());
    std::vector<double> acc(docs_.size(), 0.0);
    for (const auto& t : unique) {
        auto it = postings_.find(t);
        if (it == postings_.end()) continue;
        const double w = idf(it->second.size());
        for (const auto& p : it->second) {
            const double norm = 1.0 - params_.b + params_.b * static_cast<double>(doc_len_[p.doc]) / avgdl_;
            const double tf = p.tf;
            acc[p.doc] += w * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
        }
    }
    std::vector<Hit> hits;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        if (acc[i] > 0.0) hits.push_back({i, acc[i]});
    }
    std::sort(hits.begin(), hits.end(), [&](const Hit& a, const Hit& b) {
        if (a.score != b.score) return a.score > b.score;
        return docs_[a.doc].doc_id < docs_[b.doc].doc_id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

// --- sources -----------------------------------------------------------------

std::string_view to_string(SourceKind kind) {
    switch (kind) {
        case SourceKind::LocalCorpus: return "local_corpus";
        case SourceKind::PrecomputedEvidence: return "precomputed_evidence";
        case SourceKind::SearchAdapter: return "search_adapter";
    }
    return "local_corpus";
}

std::optional<SourceKind> parse_source_kind(std::string_view s) {
    if (s == "local_corpus") return SourceKind::LocalCorpus;
    if (s == "precomputed_evidence") return SourceKind::PrecomputedEvidence;
    if (s == "search_adapter") return SourceKind::SearchAdapter;
    return std::nullopt;
}

void to_json(json& j, const KnowledgeSourceConfig& v) {
    j = json{{"kind", to_string(v.kind)},
             {"top_k", v.top_k},
             {"location", v.location},
             {"chunk_chars", v.chunk_chars},
             {"source_name", v.source_name}};
}

void from_json(const json& j, KnowledgeSourceConfig& v) {
    auto kind = parse_source_kind(j.value("kind", std::string("local_corpus")));
    if (!kind) throw Error(ErrorCode::FatalConfigError, "unknown knowledge source kind");
    v.kind = *kind;
    v.top_k = j.value("top_k", 5);
    v.location = j.value("location", std::string());
    v.chunk_chars = j.value("chunk_chars", std::size_t{3000});
    v.source_name = j.value("source_name", std::string(to_string(v.kind)));
}

namespace {

EvidenceDoc to_evidence(const CorpusDoc& d, int rank, double score, const std::string& source) {
    EvidenceDoc e;
    e.doc_id = d.doc_id;
    e.source_name = source;
    e.text = d.title.empty() ? d.text : d.title + "\n\n" + d.text;
    e.rank = rank;
    e.score = score;
    return e;
}

}  // namespace

LocalCorpusSource::LocalCorpusSource(Bm25Index index, int top_k, std::string source_name)
    : index_(std::move(index)), top_k_(top_k), source_name_(std::move(source_name)) {}

EvidenceSet LocalCorpusSource::retrieve(const EvalPrompt& prompt) const {
    EvidenceSet set{prompt.prompt_id, {}};
    int rank = 1;
    for (const auto& hit : index_.search(prompt.query, static_cast<std::size_t>(top_k_))) {
        set.docs.push_back(to_evidence(index_.doc(hit.doc), rank++, hit.score, source_name_));
    }
    if (set.docs.empty()) spdlog::warn("prompt {}: no corpus document matches the query", prompt.prompt_id);
    return set;
}

PrecomputedEvidenceSource::PrecomputedEvidenceSource(const std::filesystem::path& path, int top_k) : top_k_(top_k) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::SourceUnavailable, fmt::format("evidence file {} not found", path.string()));
    }
    std::vector<json> records;
    try {
        records = read_jsonl(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::MalformedCorpusRecord, e.what());
    }
    std::size_t lineno = 0;
    for (const auto& rec : records) {
        ++lineno;
        EvidenceSet set;
        try {
            set = rec.get<EvidenceSet>();
        } catch (const std::exception& e) {
            throw Error(ErrorCode::MalformedCorpusRecord, fmt::format("{} record {}: {}", path.string(), lineno, e.what()));
        }
        if (!by_prompt_.emplace(set.prompt_id, std::move(set.docs)).second) {
            throw Error(ErrorCode::MalformedCorpusRecord,
                        fmt::format("{} record {}: prompt '{}' listed twice", path.string(), lineno, set.prompt_id));
        }
    }
}

EvidenceSet PrecomputedEvidenceSource::retrieve(const EvalPrompt& prompt) const {
    EvidenceSet set{prompt.prompt_id, {}};
    auto it = by_prompt_.find(prompt.prompt_id);
    if (it == by_prompt_.end()) {
        spdlog::warn("prompt {}: no precomputed evidence", prompt.prompt_id);
        return set;
    }
    set.docs = it->second;
    std::stable_sort(set.docs.begin(), set.docs.end(),
                     [](const EvidenceDoc& a, const EvidenceDoc& b) { return a.rank < b.rank; });
    if (set.docs.size() > static_cast<std::size_t>(top_k_)) set.docs.resize(static_cast<std::size_t>(top_k_));
    int rank = 1;
    for (auto& d : set.docs) d.rank = rank++;
    return set;
}

SearchAdapterSource::SearchAdapterSource(std::string endpoint, int top_k, std::string source_name)
    : endpoint_(std::move(endpoint)), top_k_(top_k), source_name_(std::move(source_name)) {}

EvidenceSet SearchAdapterSource::retrieve(const EvalPrompt& prompt) const {
    auto scheme_end = endpoint_.find("://");
    auto path_start = scheme_end == std::string::npos ? std::string::npos : endpoint_.find('/', scheme_end + 3);
    std::string host = path_start == std::string::npos ? endpoint_ : endpoint_.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

    httplib::Client client(host);
    json body{{"query", prompt.query}, {"top_k", top_k_}};
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res || res->status != 200) {
        throw Error(ErrorCode::SourceUnavailable,
                    fmt::format("search adapter {} failed for prompt {}", endpoint_, prompt.prompt_id));
    }
    EvidenceSet set{prompt.prompt_id, {}};
    try {
        auto reply = json::parse(res->body);
        for (const auto& d : reply.at("docs")) {
            auto doc = d.get<EvidenceDoc>();
            if (doc.source_name.empty()) doc.source_name = source_name_;
            set.docs.push_back(std::move(doc));
        }
    } catch (const std::exception& e) {
        throw Error(ErrorCode::SourceUnavailable, fmt::format("search adapter reply unusable: {}", e.what()));
    }
    std::stable_sort(set.docs.begin(), set.docs.end(),
                     [](const EvidenceDoc& a, const EvidenceDoc& b) { return a.rank < b.rank; });
    if (set.docs.size() > static_cast<std::size_t>(top_k_)) set.docs.resize(static_cast<std::size_t>(top_k_));
    int rank = 1;
    for (auto& d : set.docs) d.rank = rank++;
    return set;
}

std::unique_ptr<KnowledgeSource> make_knowledge_source(const KnowledgeSourceConfig& cfg) {
    if (cfg.top_k < 1) throw Error(ErrorCode::FatalConfigError, "top_k must be >= 1");
    if (cfg.chunk_chars == 0) throw Error(ErrorCode::FatalConfigError, "chunk_chars must be > 0");
    switch (cfg.kind) {
        case SourceKind::LocalCorpus:
            return std::make_unique<LocalCorpusSource>(build_local_index(cfg.location), cfg.top_k, cfg.source_name);
        case SourceKind::PrecomputedEvidence:
            return std::make_unique<PrecomputedEvidenceSource>(cfg.location, cfg.top_k);
        case SourceKind::SearchAdapter:
            return std::make_unique<SearchAdapterSource>(cfg.location, cfg.top_k, cfg.source_name);
    }
    throw Error(ErrorCode::FatalConfigError, "unknown knowledge source kind");
}

// --- chunking ----------------------------------------------------------------

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

struct Span {
    std::size_t begin;
    std::size_t end;
};

// Paragraphs are separated by a blank line (two newlines with only
// whitespace between). The separator whitespace belongs to no paragraph.
std::vector<Span> paragraphs(const std::string& text) {
    std::vector<Span> out;
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '\n') {
            std::size_t j = i + 1;
            while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
            if (j < text.size() && text[j] == '\n') {
                std::size_t sep_end = j;
                while (sep_end < text.size() && is_space(text[sep_end])) ++sep_end;
                if (i > start) out.push_back({start, i});
                start = sep_end;
                i = sep_end;
                continue;
            }
        }
        ++i;
    }
    if (start < text.size()) out.push_back({start, text.size()});
    return out;
}

// Largest cut <= limit that does not land inside a UTF-8 sequence, preferring
// the position just after whitespace in the second half of the window.
std::size_t cut_point(const std::string& text, std::size_t begin, std::size_t limit) {
    std::size_t hard = begin + limit;
    for (std::size_t p = hard; p > begin + limit / 2; --p) {
        if (is_space(text[p - 1])) return p;
    }
    while (hard > begin + 1 && (static_cast<unsigned char>(text[hard]) & 0xC0) == 0x80) --hard;
    return hard;
}

}  // namespace

std::vector<PassageChunk> chunk_text(const std::string& doc_id, const std::string& text, std::size_t chunk_chars) {
    if (chunk_chars == 0) throw Error(ErrorCode::PreconditionViolated, "chunk_chars must be > 0");
    std::vector<Span> spans;
    std::optional<Span> current;
    auto flush = [&] {
        if (current) spans.push_back(*current);
        current.reset();
    };
    for (Span p : paragraphs(text)) {
        if (current && p.end - current->begin <= chunk_chars) {
            current->end = p.end;
            continue;
        }
        flush();
        while (p.end - p.begin > chunk_chars) {
            std::size_t cut = cut_point(text, p.begin, chunk_chars);
            spans.push_back({p.begin, cut});
            p.begin = cut;
        }
        current = p;
    }
    flush();

    std::vector<PassageChunk> out;
    for (const auto& s : spans) {
        std::string piece = text.substr(s.begin, s.end - s.begin);
        if (piece.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        out.push_back({doc_id, std::move(piece), s.begin});
    }
    return out;
}

std::vector<PassageChunk> chunk_documents(const EvidenceSet& evidence, std::size_t chunk_chars) {
    std::vector<PassageChunk> out;
    for (const auto& doc : evidence.docs) {
        auto chunks = chunk_text(doc.doc_id, doc.text, chunk_chars);
        out.insert(out.end(), std::make_move_iterator(chunks.begin()), std::make_move_iterator(chunks.end()));
    }
    return out;
}

}  // namespace factrec
