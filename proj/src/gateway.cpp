#include "factrec/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "factrec/error.hpp"
#include "factrec/hash.hpp"

namespace factrec {

std::string_view to_string(RequestTag tag) {
    switch (tag) {
        case RequestTag::FactExtract: return "FactExtract";
        case RequestTag::ClaimExtract: return "ClaimExtract";
        case RequestTag::CoverageJudge: return "CoverageJudge";
        case RequestTag::PrecisionJudge: return "PrecisionJudge";
        case RequestTag::ImportanceJudge: return "ImportanceJudge";
        case RequestTag::Generate: return "Generate";
    }
    return "Generate";
}

std::optional<RequestTag> parse_request_tag(std::string_view s) {
    for (auto tag : {RequestTag::FactExtract, RequestTag::ClaimExtract, RequestTag::CoverageJudge,
                     RequestTag::PrecisionJudge, RequestTag::ImportanceJudge, RequestTag::Generate}) {
        if (to_string(tag) == s) return tag;
    }
    return std::nullopt;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorCode::DimensionMismatch, fmt::format("cosine of dims {} and {}", a.dim(), b.dim()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string cache_key(const ChatRequest& req) {
    // Array form keeps field order fixed; doubles dump with round-trip precision.
    json canonical = json::array({"chat/v1", req.model_name,
                                  req.system_text ? json(*req.system_text) : json(nullptr), req.user_text,
                                  req.temperature, req.max_tokens});
    return sha256_hex(dump_line(canonical));
}

std::string embedding_cache_key(std::string_view model_name, std::string_view text) {
    json canonical = json::array({"embed/v1", std::string(model_name), std::string(text)});
    return sha256_hex(dump_line(canonical));
}

namespace {

std::string_view to_string(FinishReason r) {
    switch (r) {
        case FinishReason::Stop: return "stop";
        case FinishReason::Length: return "length";
        case FinishReason::Error: return "error";
    }
    return "stop";
}

FinishReason parse_finish(std::string_view s) {
    if (s == "length") return FinishReason::Length;
    if (s == "error") return FinishReason::Error;
    return FinishReason::Stop;
}

json response_to_json(const ChatResponse& r) {
    return json{{"text", r.text},
                {"finish_reason", to_string(r.finish_reason)},
                {"usage", {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}}}};
}

ChatResponse response_from_json(const json& j) {
    ChatResponse r;
    r.text = j.at("text").get<std::string>();
    r.finish_reason = parse_finish(j.value("finish_reason", "stop"));
    if (auto u = j.find("usage"); u != j.end()) {
        r.usage.prompt_tokens = u->value("prompt_tokens", 0);
        r.usage.completion_tokens = u->value("completion_tokens", 0);
    }
    return r;
}

json request_to_json(const ChatRequest& req) {
    return json{{"model_name", req.model_name},
                {"system_text", req.system_text ? json(*req.system_text) : json(nullptr)},
                {"user_text", req.user_text},
                {"temperature", req.temperature},
                {"max_tokens", req.max_tokens}};
}

bool retryable(ErrorCode code) {
    return code == ErrorCode::NetworkError || code == ErrorCode::RateLimited;
}

}  // namespace

// --- ResponseCache -------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path root, std::string ns) : dir_(std::move(root) / std::move(ns)) {}

std::optional<std::filesystem::path> ResponseCache::path_for(const std::string& key) const {
    if (!dir_) return std::nullopt;
    return *dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<json> ResponseCache::get(const std::string& key) {
    {
        std::lock_guard lock(mu_);
        if (auto it = memory_.find(key); it != memory_.end()) return it->second;
    }
    auto path = path_for(key);
    if (!path) return std::nullopt;
    std::ifstream in(*path, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream buf;
    buf << in.rdbuf();
    json value;
    try {
        value = json::parse(buf.str());
    } catch (const json::parse_error&) {
        spdlog::warn("ignoring unreadable cache entry {}", path->string());
        return std::nullopt;
    }
    std::lock_guard lock(mu_);
    return memory_.try_emplace(key, std::move(value)).first->second;
}

void ResponseCache::put(const std::string& key, const json& value) {
    {
        std::lock_guard lock(mu_);
        if (!memory_.try_emplace(key, value).second) return;
    }
    auto path = path_for(key);
    if (!path) return;
    std::error_code ec;
    if (std::filesystem::exists(*path, ec)) return;
    std::filesystem::create_directories(path->parent_path(), ec);
    // Unique temp name per writer, then rename into place.
    auto tmp = *path;
    tmp += fmt::format(".tmp{}", std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            spdlog::warn("cannot write cache entry {}", tmp.string());
            return;
        }
        out << value.dump(2, ' ', false, json::error_handler_t::replace) << '\n';
    }
    if (std::filesystem::exists(*path, ec)) {
        std::filesystem::remove(tmp, ec);
        return;
    }
    std::filesystem::rename(tmp, *path, ec);
    if (ec) {
        spdlog::warn("cannot publish cache entry {}: {}", path->string(), ec.message());
        std::filesystem::remove(tmp, ec);
    }
}

// --- Gateway --------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      cache_(options_.cache_root ? ResponseCache(*options_.cache_root, options_.cache_namespace) : ResponseCache()) {
    if (!backend_) throw Error(ErrorCode::PreconditionViolated, "gateway needs a backend");
    if (options_.max_in_flight == 0) options_.max_in_flight = 1;
    if (options_.retry.max_attempts < 1) options_.retry.max_attempts = 1;
}

void Gateway::acquire_slot() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
    ++in_flight_;
    std::uint64_t now = in_flight_;
    std::uint64_t prev = peak_in_flight_.load();
    while (now > prev && !peak_in_flight_.compare_exchange_weak(prev, now)) {
    }
}

void Gateway::release_slot() {
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_one();
}

template <class F>
auto Gateway::with_retry(F&& call) -> decltype(call()) {
    thread_local std::mt19937 jitter_rng(std::random_device{}());
    for (int attempt = 1;; ++attempt) {
        try {
            acquire_slot();
            struct Release {
                Gateway* g;
                ~Release() { g->release_slot(); }
            } release{this};
            return call();
        } catch (const Error& e) {
            if (!retryable(e.code()) || attempt >= options_.retry.max_attempts) throw;
            auto backoff = options_.retry.base_delay * (1LL << std::min(attempt - 1, 20));
            backoff = std::min<std::chrono::milliseconds>(backoff, options_.retry.max_delay);
            std::uniform_real_distribution<double> jitter(0.5, 1.0);
            auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(backoff * jitter(jitter_rng));
            spdlog::debug("attempt {} failed ({}); retrying in {} ms", attempt, e.what(), wait.count());
            std::this_thread::sleep_for(wait);
        }
    }
}

ChatResponse Gateway::chat_uncached(const ChatRequest& req, const std::string& key) {
    ChatResponse resp = with_retry([&] {
        ++chat_calls_;
        return backend_->complete(req);
    });
    resp.from_cache = false;
    if (resp.finish_reason != FinishReason::Error) {
        cache_.put(key, json{{"key", key}, {"request", request_to_json(req)}, {"response", response_to_json(resp)}});
    }
    return resp;
}

ChatResponse Gateway::chat(const ChatRequest& req) {
    if (req.user_text.empty()) {
        throw Error(ErrorCode::PreconditionViolated, "chat request with empty user_text");
    }
    const std::string key = cache_key(req);
    if (auto hit = cache_.get(key)) {
        ++cache_hits_;
        auto resp = response_from_json(hit->at("response"));
        resp.from_cache = true;
        return resp;
    }

    std::promise<ChatResponse> promise;
    std::shared_future<ChatResponse> waiter;
    {
        std::lock_guard lock(mu_);
        if (auto it = pending_.find(key); it != pending_.end()) {
            waiter = it->second;
        } else {
            pending_.emplace(key, promise.get_future().share());
        }
    }
    if (waiter.valid()) {
        // Another thread is already fetching this key; share its result.
        ChatResponse resp = waiter.get();
        ++cache_hits_;
        resp.from_cache = true;
        return resp;
    }

    try {
        ChatResponse resp = chat_uncached(req, key);
        promise.set_value(resp);
        std::lock_guard lock(mu_);
        pending_.erase(key);
        return resp;
    } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard lock(mu_);
        pending_.erase(key);
        throw;
    }
}

std::vector<EmbeddingVector> Gateway::embed(const std::vector<std::string>& texts, const std::string& model_name) {
    if (texts.empty()) {
        throw Error(ErrorCode::PreconditionViolated, "embed called with an empty list");
    }
    std::vector<std::optional<EmbeddingVector>> out(texts.size());
    std::vector<std::string> misses;
    std::map<std::string, std::vector<std::size_t>> miss_slots;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        auto key = embedding_cache_key(model_name, texts[i]);
        if (auto hit = cache_.get(key)) {
            ++cache_hits_;
            out[i] = EmbeddingVector{hit->at("values").get<std::vector<double>>()};
            continue;
        }
        auto [it, fresh] = miss_slots.try_emplace(texts[i]);
        if (fresh) misses.push_back(texts[i]);
        it->second.push_back(i);
    }

    if (!misses.empty()) {
        auto vectors = with_retry([&] {
            ++embed_calls_;
            return backend_->embed(misses, model_name);
        });
        if (vectors.size() != misses.size()) {
            throw Error(ErrorCode::DimensionMismatch,
                        fmt::format("backend returned {} vectors for {} texts", vectors.size(), misses.size()));
        }
        for (std::size_t m = 0; m < misses.size(); ++m) {
            const std::string& text = misses[m];
            cache_.put(embedding_cache_key(model_name, text),
                       json{{"key", embedding_cache_key(model_name, text)}, {"model", model_name},
                            {"text", text}, {"values", vectors[m].values}});
            for (auto slot : miss_slots[text]) out[slot] = vectors[m];
        }
    }

    std::vector<EmbeddingVector> result;
    result.reserve(out.size());
    std::lock_guard lock(mu_);
    for (auto& v : out) {
        if (!embed_dim_) embed_dim_ = v->dim();
        if (v->dim() != *embed_dim_ || v->dim() == 0) {
            throw Error(ErrorCode::DimensionMismatch,
                        fmt::format("embedding of dim {} in a run of dim {}", v->dim(), *embed_dim_));
        }
        result.push_back(std::move(*v));
    }
    return result;
}

GatewayStats Gateway::stats() const {
    return GatewayStats{chat_calls_.load(), embed_calls_.load(), cache_hits_.load(), peak_in_flight_.load()};
}

}  // namespace factrec
