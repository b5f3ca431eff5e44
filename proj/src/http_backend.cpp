#include <httplib.h>

#include <algorithm>
#include <cstdlib>

#include <fmt/format.h>

#include "factrec/error.hpp"
#include "factrec/gateway.hpp"

namespace factrec {

namespace {

std::string env_or(std::initializer_list<const char*> names, std::string fallback) {
    for (const char* name : names) {
        if (const char* v = std::getenv(name); v != nullptr && *v != '\0') return v;
    }
    return fallback;
}

// Splits "https://host:port/v1" into "https://host:port" and "/v1".
std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::FatalConfigError, fmt::format("base URL '{}' lacks a scheme", url));
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

}  // namespace

HttpBackendConfig HttpBackendConfig::from_env() {
    HttpBackendConfig cfg;
    cfg.base_url = env_or({"FACTREC_BASE_URL", "OPENAI_BASE_URL"}, cfg.base_url);
    cfg.api_key = env_or({"FACTREC_API_KEY", "OPENAI_API_KEY"}, "");
    return cfg;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    std::tie(scheme_host_, path_prefix_) = split_url(config_.base_url);
}

json HttpBackend::chat_body(const ChatRequest& req) {
    json messages = json::array();
    if (req.system_text) messages.push_back({{"role", "system"}, {"content", *req.system_text}});
    messages.push_back({{"role", "user"}, {"content", req.user_text}});
    return json{{"model", req.model_name},
                {"messages", messages},
                {"temperature", req.temperature},
                {"max_tokens", req.max_tokens}};
}

ChatResponse HttpBackend::parse_chat_reply(const json& body) {
    ChatResponse resp;
    try {
        const auto& choice = body.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        resp.text = content.is_string() ? content.get<std::string>() : std::string();
        auto finish = choice.value("finish_reason", json("stop"));
        if (finish.is_string() && finish.get<std::string>() == "length") {
            resp.finish_reason = FinishReason::Length;
        }
        if (auto u = body.find("usage"); u != body.end() && u->is_object()) {
            resp.usage.prompt_tokens = u->value("prompt_tokens", 0);
            resp.usage.completion_tokens = u->value("completion_tokens", 0);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BackendRefused, fmt::format("malformed chat completion reply: {}", e.what()));
    }
    return resp;
}

json HttpBackend::post(const std::string& path, const json& body) {
    httplib::Client client(scheme_host_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post(path_prefix_ + path, headers, body.dump(), "application/json");
    if (!res) {
        throw Error(ErrorCode::NetworkError,
                    fmt::format("POST {}{}: {}", config_.base_url, path, httplib::to_string(res.error())));
    }
    if (res->status == 429) {
        throw Error(ErrorCode::RateLimited, fmt::format("POST {}: HTTP 429", path));
    }
    if (res->status == 408 || res->status >= 500) {
        throw Error(ErrorCode::NetworkError, fmt::format("POST {}: HTTP {}", path, res->status));
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorCode::BackendRefused, fmt::format("POST {}: HTTP {}: {}", path, res->status, res->body));
    }
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::BackendRefused, fmt::format("POST {}: reply is not JSON ({})", path, e.what()));
    }
}

ChatResponse HttpBackend::complete(const ChatRequest& req) {
    return parse_chat_reply(post("/chat/completions", chat_body(req)));
}

std::vector<EmbeddingVector> HttpBackend::embed(const std::vector<std::string>& texts, const std::string& model_name) {
    json reply = post("/embeddings", json{{"model", model_name}, {"input", texts}});
    std::vector<std::pair<int, EmbeddingVector>> indexed;
    try {
        for (const auto& item : reply.at("data")) {
            indexed.emplace_back(item.value("index", static_cast<int>(indexed.size())),
                                 EmbeddingVector{item.at("embedding").get<std::vector<double>>()});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BackendRefused, fmt::format("malformed embeddings reply: {}", e.what()));
    }
    std::stable_sort(indexed.begin(), indexed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<EmbeddingVector> out;
    out.reserve(indexed.size());
    for (auto& [_, v] : indexed) out.push_back(std::move(v));
    if (out.size() != texts.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("embeddings reply has {} vectors for {} inputs", out.size(), texts.size()));
    }
    for (const auto& v : out) {
        if (v.dim() != out.front().dim()) {
            throw Error(ErrorCode::DimensionMismatch, "embeddings reply mixes vector dimensions");
        }
    }
    return out;
}

}  // namespace factrec
