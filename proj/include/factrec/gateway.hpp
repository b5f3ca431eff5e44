#pragma once
// Single choke-point for every LLM interaction: chat completions and
// embeddings, with a content-addressed cache, bounded concurrency and
// retry with exponential backoff.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "factrec/model.hpp"

namespace factrec {

enum class RequestTag { FactExtract, ClaimExtract, CoverageJudge, PrecisionJudge, ImportanceJudge, Generate };

std::string_view to_string(RequestTag tag);
std::optional<RequestTag> parse_request_tag(std::string_view s);

struct ChatRequest {
    std::string model_name;
    std::optional<std::string> system_text;
    std::string user_text;
    double temperature = 0.0;
    int max_tokens = 1024;
    RequestTag request_tag = RequestTag::Generate;
};

enum class FinishReason { Stop, Length, Error };

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct ChatResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
    Usage usage;
    bool from_cache = false;
};

struct EmbeddingVector {
    std::vector<double> values;

    [[nodiscard]] std::size_t dim() const noexcept { return values.size(); }
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Stable SHA-256 (hex) over model, system text, user text, temperature and
/// max_tokens. The request tag does not participate.
std::string cache_key(const ChatRequest& req);
std::string embedding_cache_key(std::string_view model_name, std::string_view text);

/// A transport that talks to one model provider. Implementations throw
/// Error(NetworkError | RateLimited | BackendRefused) on failure.
class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatResponse complete(const ChatRequest& req) = 0;
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts,
                                               const std::string& model_name) = 0;
};

/// Two-level cache: process memory plus, optionally, one JSON file per key
/// under {root}/{namespace}/{key[0:2]}/{key}.json.
class ResponseCache {
public:
    ResponseCache() = default;
    ResponseCache(std::filesystem::path root, std::string ns);

    std::optional<json> get(const std::string& key);
    /// First writer wins; later puts for an existing key are ignored.
    void put(const std::string& key, const json& value);

    [[nodiscard]] std::optional<std::filesystem::path> path_for(const std::string& key) const;

private:
    std::optional<std::filesystem::path> dir_;
    std::mutex mu_;
    std::map<std::string, json> memory_;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{500};
    std::chrono::milliseconds max_delay{8000};
};

struct GatewayOptions {
    std::size_t max_in_flight = 4;
    RetryPolicy retry;
    std::optional<std::filesystem::path> cache_root;
    std::string cache_namespace = "default";
};

struct GatewayStats {
    std::uint64_t chat_calls = 0;       // backend invocations, including retries
    std::uint64_t embed_calls = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t peak_in_flight = 0;
};

class Gateway {
public:
    Gateway(std::shared_ptr<Backend> backend, GatewayOptions options);

    ChatResponse chat(const ChatRequest& req);

    /// One vector per input, in order. Throws PreconditionViolated on an
    /// empty list and DimensionMismatch on inconsistent dimensions.
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, const std::string& model_name);

    [[nodiscard]] GatewayStats stats() const;
    [[nodiscard]] const GatewayOptions& options() const noexcept { return options_; }

private:
    template <class F>
    auto with_retry(F&& call) -> decltype(call());
    void acquire_slot();
    void release_slot();

    ChatResponse chat_uncached(const ChatRequest& req, const std::string& key);

    std::shared_ptr<Backend> backend_;
    GatewayOptions options_;
    ResponseCache cache_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::size_t in_flight_ = 0;
    std::map<std::string, std::shared_future<ChatResponse>> pending_;
    std::optional<std::size_t> embed_dim_;

    std::atomic<std::uint64_t> chat_calls_{0};
    std::atomic<std::uint64_t> embed_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> peak_in_flight_{0};
};

// --- scripted mock backend ---------------------------------------------------

enum class MockFailure { None, Network, RateLimited, Refused };

/// A scripted reply. A rule matches when every present criterion holds; the
/// first matching rule in insertion order answers.
struct MockRule {
    std::optional<std::string> key;           // exact cache_key(req)
    std::optional<RequestTag> tag;
    std::optional<std::string> model;
    std::vector<std::string> contains;        // substrings of user_text
    std::string reply;
    MockFailure failure = MockFailure::None;
    std::optional<int> times;                 // rule expires after this many uses
};

/// Deterministic in-process backend. Unmatched chat requests are refused.
/// Embeddings come from the script or from a hash-seeded unit vector.
class MockBackend : public Backend {
public:
    MockBackend() = default;

    /// Script format:
    /// {"rules": [{"tag", "model", "key", "contains": [..], "reply" | "error", "times"}],
    ///  "embeddings": {"dim": 64, "vectors": {"text": [..]}}, "latency_ms": 0}
    static std::shared_ptr<MockBackend> from_script(const json& script);
    static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path);

    void add_rule(MockRule rule);
    void set_embedding(const std::string& text, std::vector<double> values);
    void set_embedding_dim(std::size_t dim) { dim_ = dim; }
    void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }

    ChatResponse complete(const ChatRequest& req) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, const std::string& model_name) override;

    [[nodiscard]] std::uint64_t calls() const noexcept { return calls_.load(); }
    [[nodiscard]] std::uint64_t peak_concurrency() const noexcept { return peak_.load(); }

private:
    std::mutex mu_;
    std::vector<MockRule> rules_;
    std::vector<int> uses_;
    std::map<std::string, std::vector<double>> embeddings_;
    std::size_t dim_ = 64;
    std::chrono::milliseconds latency_{0};
    std::atomic<std::uint64_t> calls_{0};
    std::atomic<std::uint64_t> active_{0};
    std::atomic<std::uint64_t> peak_{0};
};

/// Hash-seeded pseudo-random unit vector; identical for identical text.
EmbeddingVector pseudo_embedding(std::string_view text, std::size_t dim);

// --- OpenAI-compatible HTTP backend -----------------------------------------

struct HttpBackendConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    std::chrono::seconds timeout{120};

    /// Reads FACTREC_BASE_URL / OPENAI_BASE_URL and FACTREC_API_KEY / OPENAI_API_KEY.
    static HttpBackendConfig from_env();
};

class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    ChatResponse complete(const ChatRequest& req) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, const std::string& model_name) override;

    /// Request body for POST {base}/chat/completions.
    static json chat_body(const ChatRequest& req);
    static ChatResponse parse_chat_reply(const json& body);

private:
    json post(const std::string& path, const json& body);

    HttpBackendConfig config_;
    std::string scheme_host_;
    std::string path_prefix_;
};

}  // namespace factrec
