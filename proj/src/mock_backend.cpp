#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "factrec/error.hpp"
#include "factrec/gateway.hpp"
#include "factrec/hash.hpp"

namespace factrec {

namespace {

int count_words(std::string_view s) {
    int n = 0;
    bool in_word = false;
    for (char c : s) {
        bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

MockFailure parse_failure(const std::string& s) {
    if (s == "network") return MockFailure::Network;
    if (s == "rate_limited") return MockFailure::RateLimited;
    if (s == "refused") return MockFailure::Refused;
    throw Error(ErrorCode::InvalidRecord, fmt::format("unknown mock error kind '{}'", s));
}

struct ActiveGuard {
    std::atomic<std::uint64_t>& active;
    std::atomic<std::uint64_t>& peak;
    ActiveGuard(std::atomic<std::uint64_t>& a, std::atomic<std::uint64_t>& p) : active(a), peak(p) {
        std::uint64_t now = ++active;
        std::uint64_t prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
    }
    ~ActiveGuard() { --active; }
};

}  // namespace

EmbeddingVector pseudo_embedding(std::string_view text, std::size_t dim) {
    std::uint64_t state = fnv1a64(text);
    EmbeddingVector v;
    v.values.resize(dim);
    double norm = 0.0;
    for (auto& x : v.values) {
        x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        v.values.assign(dim, 0.0);
        if (dim > 0) v.values[0] = 1.0;
        return v;
    }
    for (auto& x : v.values) x /= norm;
    return v;
}

std::shared_ptr<MockBackend> MockBackend::from_script(const json& script) {
    auto mock = std::make_shared<MockBackend>();
    for (const auto& r : script.value("rules", json::array())) {
        MockRule rule;
        if (r.contains("key")) rule.key = r.at("key").get<std::string>();
        if (r.contains("model")) rule.model = r.at("model").get<std::string>();
        if (r.contains("tag")) {
            auto tag = parse_request_tag(r.at("tag").get<std::string>());
            if (!tag) throw Error(ErrorCode::InvalidRecord, fmt::format("unknown request tag in mock rule: {}", r.dump()));
            rule.tag = *tag;
        }
        if (auto c = r.find("contains"); c != r.end()) {
            if (c->is_string()) {
                rule.contains.push_back(c->get<std::string>());
            } else {
                rule.contains = c->get<std::vector<std::string>>();
            }
        }
        if (r.contains("error")) {
            rule.failure = parse_failure(r.at("error").get<std::string>());
        } else if (auto reply = r.find("reply"); reply != r.end()) {
            // Non-string replies (e.g. JSON judge outputs) are sent as their compact dump.
            rule.reply = reply->is_string() ? reply->get<std::string>() : reply->dump();
        } else {
            throw Error(ErrorCode::InvalidRecord, fmt::format("mock rule needs 'reply' or 'error': {}", r.dump()));
        }
        if (r.contains("times")) rule.times = r.at("times").get<int>();
        mock->add_rule(std::move(rule));
    }
    if (auto e = script.find("embeddings"); e != script.end()) {
        mock->dim_ = e->value("dim", std::size_t{64});
        for (const auto& [text, values] : e->value("vectors", json::object()).items()) {
            mock->set_embedding(text, values.get<std::vector<double>>());
        }
    }
    mock->latency_ = std::chrono::milliseconds(script.value("latency_ms", 0));
    return mock;
}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FatalConfigError, fmt::format("cannot open mock script {}", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return from_script(json::parse(buf.str()));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FatalConfigError, fmt::format("bad mock script {}: {}", path.string(), e.what()));
    }
}

void MockBackend::add_rule(MockRule rule) {
    std::lock_guard lock(mu_);
    rules_.push_back(std::move(rule));
    uses_.push_back(0);
}

void MockBackend::set_embedding(const std::string& text, std::vector<double> values) {
    std::lock_guard lock(mu_);
    embeddings_[text] = std::move(values);
}

ChatResponse MockBackend::complete(const ChatRequest& req) {
    ++calls_;
    ActiveGuard guard(active_, peak_);
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

    std::optional<MockRule> hit;
    {
        std::lock_guard lock(mu_);
        std::optional<std::string> key;
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            const MockRule& rule = rules_[i];
            if (rule.times && uses_[i] >= *rule.times) continue;
            if (rule.tag && *rule.tag != req.request_tag) continue;
            if (rule.model && *rule.model != req.model_name) continue;
            if (rule.key) {
                if (!key) key = cache_key(req);
                if (*rule.key != *key) continue;
            }
            bool all = true;
            for (const auto& needle : rule.contains) {
                if (req.user_text.find(needle) == std::string::npos) {
                    all = false;
                    break;
                }
            }
            if (!all) continue;
            ++uses_[i];
            hit = rule;
            break;
        }
    }
    if (!hit) {
        throw Error(ErrorCode::BackendRefused,
                    fmt::format("mock has no scripted reply for {} request", to_string(req.request_tag)));
    }
    switch (hit->failure) {
        case MockFailure::Network: throw Error(ErrorCode::NetworkError, "scripted network failure");
        case MockFailure::RateLimited: throw Error(ErrorCode::RateLimited, "scripted HTTP 429");
        case MockFailure::Refused: throw Error(ErrorCode::BackendRefused, "scripted refusal");
        case MockFailure::None: break;
    }
    ChatResponse resp;
    resp.text = hit->reply;
    resp.usage.prompt_tokens = count_words(req.user_text) + (req.system_text ? count_words(*req.system_text) : 0);
    resp.usage.completion_tokens = count_words(resp.text);
    return resp;
}

std::vector<EmbeddingVector> MockBackend::embed(const std::vector<std::string>& texts, const std::string&) {
    ++calls_;
    ActiveGuard guard(active_, peak_);
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    std::lock_guard lock(mu_);
    for (const auto& t : texts) {
        if (auto it = embeddings_.find(t); it != embeddings_.end()) {
            out.push_back(EmbeddingVector{it->second});
        } else {
            out.push_back(pseudo_embedding(t, dim_));
        }
    }
    return out;
}

}  // namespace factrec
