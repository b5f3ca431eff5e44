#include "factrec/runner.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <mutex>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "factrec/claims.hpp"
#include "factrec/error.hpp"
#include "factrec/judge.hpp"
#include "factrec/metrics.hpp"
#include "factrec/parallel.hpp"
#include "factrec/prompts.hpp"
#include "factrec/report.hpp"

namespace fs = std::filesystem;

namespace factrec {

// --- config ----------------------------------------------------------------------

namespace {

std::string_view to_string(CoverageMode mode) {
    return mode == CoverageMode::Claims ? "claims" : "raw_response";
}

CoverageMode parse_coverage_mode(const std::string& s) {
    if (s == "claims") return CoverageMode::Claims;
    if (s == "raw_response") return CoverageMode::RawResponse;
    throw Error(ErrorCode::FatalConfigError, fmt::format("unknown coverage_mode '{}'", s));
}

json gateway_json(const GatewayConfig& g, bool with_locations) {
    json j{{"backend", g.backend},
           {"mock_script", g.mock_script},
           {"base_url", g.base_url},
           {"generator_model", g.generator_model},
           {"extractor_model", g.extractor_model},
           {"judge_model", g.judge_model},
           {"generation_temperature", g.generation_temperature},
           {"max_tokens", g.max_tokens},
           {"generation_max_tokens", g.generation_max_tokens},
           {"max_in_flight", g.max_in_flight},
           {"max_attempts", g.max_attempts},
           {"backoff_ms", g.backoff_ms},
           {"cache_namespace", g.cache_namespace}};
    if (with_locations) j["cache_root"] = g.cache_root;
    return j;
}

GatewayConfig gateway_from_json(const json& j) {
    GatewayConfig g;
    g.backend = j.value("backend", g.backend);
    g.mock_script = j.value("mock_script", g.mock_script);
    g.base_url = j.value("base_url", g.base_url);
    g.generator_model = j.value("generator_model", g.generator_model);
    g.extractor_model = j.value("extractor_model", g.extractor_model);
    g.judge_model = j.value("judge_model", g.judge_model);
    g.generation_temperature = j.value("generation_temperature", g.generation_temperature);
    g.max_tokens = j.value("max_tokens", g.max_tokens);
    g.generation_max_tokens = j.value("generation_max_tokens", g.generation_max_tokens);
    g.max_in_flight = j.value("max_in_flight", g.max_in_flight);
    g.max_attempts = j.value("max_attempts", g.max_attempts);
    g.backoff_ms = j.value("backoff_ms", g.backoff_ms);
    g.cache_root = j.value("cache_root", g.cache_root);
    g.cache_namespace = j.value("cache_namespace", g.cache_namespace);
    return g;
}

bool filesystem_safe(const std::string& s) {
    if (s.empty() || s == "." || s == "..") return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    });
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
    try {
        RunConfig c;
        c.base_dir = j.contains("base_dir") ? fs::path(j.at("base_dir").get<std::string>()) : base_dir;
        c.run_id = j.value("run_id", c.run_id);
        c.domain = j.value("domain", c.domain);
        c.prompts_path = j.value("prompts", c.prompts_path);
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("knowledge_source")) c.knowledge = j.at("knowledge_source").get<KnowledgeSourceConfig>();
        if (j.contains("importance")) c.importance = j.at("importance").get<ImportanceConfig>();
        if (j.contains("selection")) c.selection = j.at("selection").get<SelectionRule>();
        if (j.contains("dedup")) c.dedup = j.at("dedup").get<DedupConfig>();
        if (j.contains("gateway")) c.gateway = gateway_from_json(j.at("gateway"));
        c.importance_batch_size = j.value("importance_batch_size", c.importance_batch_size);
        c.evidence_char_budget = j.value("evidence_char_budget", c.evidence_char_budget);
        c.coverage_mode = parse_coverage_mode(j.value("coverage_mode", std::string("claims")));
        if (j.contains("claim_context")) {
            c.context_before = j.at("claim_context").value("before", c.context_before);
            c.context_after = j.at("claim_context").value("after", c.context_after);
        }
        if (j.contains("recall_budgets")) c.recall_budgets = j.at("recall_budgets").get<std::vector<SelectionRule>>();
        c.concurrency = j.value("concurrency", c.concurrency);
        return c;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::FatalConfigError) throw;
        throw Error(ErrorCode::FatalConfigError, e.what());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FatalConfigError, fmt::format("bad run config: {}", e.what()));
    }
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FatalConfigError, fmt::format("cannot read config {}", path.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::FatalConfigError, fmt::format("{}: {}", path.string(), e.what()));
    }
    return from_json(j, fs::absolute(path).parent_path());
}

json RunConfig::snapshot() const {
    json budgets = json::array();
    for (const auto& b : recall_budgets.empty() ? standard_budgets() : recall_budgets) budgets.push_back(b);
    return json{{"run_id", run_id},
                {"domain", domain},
                {"prompts", prompts_path},
                {"knowledge_source", knowledge},
                {"importance", importance},
                {"selection", selection},
                {"dedup", dedup},
                {"gateway", gateway_json(gateway, false)},
                {"importance_batch_size", importance_batch_size},
                {"evidence_char_budget", evidence_char_budget},
                {"coverage_mode", to_string(coverage_mode)},
                {"claim_context", {{"before", context_before}, {"after", context_after}}},
                {"recall_budgets", budgets},
                {"concurrency", concurrency}};
}

json RunConfig::to_json() const {
    json j = snapshot();
    j["gateway"] = gateway_json(gateway, true);
    j["output_dir"] = output_dir;
    j["base_dir"] = base_dir.string();
    return j;
}

fs::path RunConfig::resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

void RunConfig::validate() const {
    auto fatal = [](const std::string& msg) { throw Error(ErrorCode::FatalConfigError, msg); };
    if (!filesystem_safe(run_id)) fatal(fmt::format("run_id '{}' is not filesystem-safe", run_id));
    if (prompts_path.empty()) fatal("no prompts file configured");
    if (!fs::exists(resolve(prompts_path))) fatal(fmt::format("prompts file {} not found", resolve(prompts_path).string()));
    if (output_dir.empty()) fatal("no output_dir configured");
    if (knowledge.top_k < 1) fatal("knowledge_source.top_k must be >= 1");
    if (knowledge.chunk_chars == 0) fatal("knowledge_source.chunk_chars must be > 0");
    if (knowledge.location.empty()) fatal("knowledge_source.location is empty");
    if (importance_batch_size == 0) fatal("importance_batch_size must be > 0");
    if (concurrency == 0) fatal("concurrency must be > 0");
    if (gateway.backend != "mock" && gateway.backend != "http") fatal(fmt::format("unknown backend '{}'", gateway.backend));
    try {
        importance.validate();
        selection.validate();
        dedup.validate();
        for (const auto& b : recall_budgets) b.validate();
    } catch (const Error& e) {
        fatal(e.what());
    }
}

// --- stages ----------------------------------------------------------------------

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::Generate: return "generate";
        case Stage::Retrieve: return "retrieve";
        case Stage::BuildRefs: return "build-refs";
        case Stage::ExtractClaims: return "extract-claims";
        case Stage::Judge: return "judge";
        case Stage::Score: return "score";
    }
    return "unknown";
}

std::string_view to_string(PromptStage stage) {
    switch (stage) {
        case PromptStage::Pending: return "pending";
        case PromptStage::Retrieved: return "retrieved";
        case PromptStage::FactsBuilt: return "facts_built";
        case PromptStage::ClaimsBuilt: return "claims_built";
        case PromptStage::Judged: return "judged";
        case PromptStage::Scored: return "scored";
        case PromptStage::Failed: return "failed";
    }
    return "unknown";
}

void PromptState::advance(PromptStage next) {
    if (stage == PromptStage::Failed || next < stage) {
        throw Error(ErrorCode::PreconditionViolated,
                    fmt::format("prompt {}: cannot move from {} to {}", prompt_id, to_string(stage), to_string(next)));
    }
    stage = next;
}

void PromptState::fail(std::string reason) {
    stage = PromptStage::Failed;
    failure_reason = std::move(reason);
}

std::set<Stage> all_stages() {
    return {Stage::Generate, Stage::Retrieve, Stage::BuildRefs, Stage::ExtractClaims, Stage::Judge, Stage::Score};
}

GatewayOptions make_gateway_options(const RunConfig& cfg) {
    GatewayOptions o;
    o.max_in_flight = cfg.gateway.max_in_flight;
    o.retry.max_attempts = cfg.gateway.max_attempts;
    o.retry.base_delay = std::chrono::milliseconds(cfg.gateway.backoff_ms);
    if (!cfg.gateway.cache_root.empty()) o.cache_root = cfg.resolve(cfg.gateway.cache_root);
    o.cache_namespace = cfg.gateway.cache_namespace;
    return o;
}

std::shared_ptr<Backend> make_backend(const RunConfig& cfg) {
    if (cfg.gateway.backend == "mock") {
        if (cfg.gateway.mock_script.empty()) {
            throw Error(ErrorCode::FatalConfigError, "mock backend selected but no mock_script given");
        }
        return MockBackend::from_file(cfg.resolve(cfg.gateway.mock_script));
    }
    auto http = HttpBackendConfig::from_env();
    if (!cfg.gateway.base_url.empty()) http.base_url = cfg.gateway.base_url;
    if (http.api_key.empty()) spdlog::warn("no API key in FACTREC_API_KEY or OPENAI_API_KEY");
    return std::make_shared<HttpBackend>(http);
}

EvalPrompt generate_response(const EvalPrompt& prompt, Gateway& gateway, const GatewayConfig& cfg) {
    if (prompt.response) return prompt;
    ChatRequest req;
    req.model_name = cfg.generator_model;
    req.user_text = prompt.query;
    req.temperature = cfg.generation_temperature;
    req.max_tokens = cfg.generation_max_tokens;
    req.request_tag = RequestTag::Generate;
    auto reply = gateway.chat(req);
    if (reply.finish_reason == FinishReason::Length) {
        spdlog::warn("prompt {}: generated response hit the token limit", prompt.prompt_id);
    }
    EvalPrompt out = prompt;
    out.response = reply.text;
    return out;
}

std::vector<EvalPrompt> load_prompts(const fs::path& path) {
    PromptValidator validator;
    std::vector<EvalPrompt> out;
    try {
        for (const auto& record : read_jsonl(path)) out.push_back(validator.validate(record));
    } catch (const Error& e) {
        throw Error(ErrorCode::FatalConfigError, fmt::format("{}: {}", path.string(), e.what()));
    }
    if (out.empty()) throw Error(ErrorCode::FatalConfigError, fmt::format("{} holds no prompts", path.string()));
    return out;
}

// --- artifacts -------------------------------------------------------------------

namespace {

enum StageFile : std::size_t { kResponsesFile, kEvidenceFile, kFactsFile, kReferencesFile, kClaimsFile, kVerdictsFile,
                               kCoverageFile, kStageFileCount };

constexpr std::array<const char*, kStageFileCount> kStageFileNames = {
    artifact::kResponses, artifact::kEvidence, artifact::kFacts,   artifact::kReferences,
    artifact::kClaims,    artifact::kVerdicts, artifact::kCoverage};

// Producing stage of each artifact, for failure reports.
constexpr std::array<Stage, kStageFileCount> kStageOfFile = {Stage::Generate,      Stage::Retrieve, Stage::BuildRefs,
                                                             Stage::BuildRefs,     Stage::ExtractClaims, Stage::Judge,
                                                             Stage::Judge};

template <class T, class Convert>
std::map<std::string, T> load_stage(const fs::path& path, Convert convert) {
    std::map<std::string, T> out;
    if (!fs::exists(path)) return out;
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string prompt_id;
        try {
            json j = json::parse(line);
            prompt_id = j.at("prompt_id").get<std::string>();
            if (!out.emplace(prompt_id, convert(j)).second) {
                throw Error(ErrorCode::CorruptArtifact, fmt::format("second line for prompt {}", prompt_id));
            }
        } catch (const std::exception& e) {
            throw Error(ErrorCode::CorruptArtifact, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
    }
    return out;
}

struct Artifacts {
    std::map<std::string, EvalPrompt> responses;
    std::map<std::string, EvidenceSet> evidence;
    std::map<std::string, std::vector<AtomicFact>> facts;
    std::map<std::string, ReferenceSet> references;
    std::map<std::string, std::vector<AtomicClaim>> claims;
    std::map<std::string, std::vector<ClaimVerdict>> verdicts;
    std::map<std::string, std::vector<FactCoverage>> coverage;

    static Artifacts load(const fs::path& dir) {
        Artifacts a;
        a.responses = load_stage<EvalPrompt>(dir / artifact::kResponses, [](const json& j) {
            auto p = j.get<EvalPrompt>();
            if (!p.response) throw Error(ErrorCode::CorruptArtifact, "response line without a response");
            return p;
        });
        a.evidence = load_stage<EvidenceSet>(dir / artifact::kEvidence, [](const json& j) { return j.get<EvidenceSet>(); });
        a.facts = load_stage<std::vector<AtomicFact>>(dir / artifact::kFacts,
                                                      [](const json& j) { return j.at("facts").get<std::vector<AtomicFact>>(); });
        a.references =
            load_stage<ReferenceSet>(dir / artifact::kReferences, [](const json& j) { return j.get<ReferenceSet>(); });
        a.claims = load_stage<std::vector<AtomicClaim>>(
            dir / artifact::kClaims, [](const json& j) { return j.at("claims").get<std::vector<AtomicClaim>>(); });
        a.verdicts = load_stage<std::vector<ClaimVerdict>>(
            dir / artifact::kVerdicts, [](const json& j) { return j.at("verdicts").get<std::vector<ClaimVerdict>>(); });
        a.coverage = load_stage<std::vector<FactCoverage>>(
            dir / artifact::kCoverage, [](const json& j) { return j.at("coverage").get<std::vector<FactCoverage>>(); });
        return a;
    }
};

template <class T>
std::optional<T> lookup(const std::map<std::string, T>& m, const std::string& key) {
    auto it = m.find(key);
    return it == m.end() ? std::nullopt : std::optional<T>(it->second);
}

template <class T>
const T& need(const std::optional<T>& v, const char* file) {
    if (!v) throw Error(ErrorCode::PreconditionViolated, fmt::format("no {} line for this prompt", file));
    return *v;
}

// Appends lines to one stage file in prompt order, whatever order the
// prompts finish in. Every index must be submitted exactly once.
class OrderedWriter {
public:
    OrderedWriter(fs::path path, std::size_t n) : path_(std::move(path)), slots_(n) {}
    OrderedWriter(const OrderedWriter&) = delete;
    OrderedWriter& operator=(const OrderedWriter&) = delete;

    void submit(std::size_t index, std::optional<std::string> line) {
        std::lock_guard lock(mu_);
        slots_.at(index) = std::move(line);
        ready_.insert(index);
        while (ready_.count(next_)) {
            if (auto& l = slots_[next_]) write(*l);
            slots_[next_].reset();
            ready_.erase(next_);
            ++next_;
        }
    }

private:
    void write(const std::string& line) {
        if (!out_.is_open()) {
            out_.open(path_, std::ios::binary | std::ios::app);
            if (!out_) throw Error(ErrorCode::FatalConfigError, fmt::format("cannot append to {}", path_.string()));
        }
        out_ << line << '\n';
        out_.flush();
    }

    fs::path path_;
    std::mutex mu_;
    std::vector<std::optional<std::string>> slots_;
    std::set<std::size_t> ready_;
    std::size_t next_ = 0;
    std::ofstream out_;
};

json prompt_line(const std::string& prompt_id, const char* key, const json& value) {
    return json{{"prompt_id", prompt_id}, {key, value}};
}

}  // namespace

// --- runner ----------------------------------------------------------------------

Runner::Runner(RunConfig cfg, std::shared_ptr<Backend> backend) : cfg_(std::move(cfg)), backend_(std::move(backend)) {
    cfg_.validate();
    if (!backend_) backend_ = make_backend(cfg_);
    gateway_ = std::make_unique<Gateway>(backend_, make_gateway_options(cfg_));
}

RunOutcome Runner::execute(const std::set<Stage>& stages) {
    const fs::path out_dir = cfg_.output_path();
    fs::create_directories(out_dir);
    if (!fs::exists(out_dir / artifact::kConfig)) {
        std::ofstream(out_dir / artifact::kConfig) << cfg_.to_json().dump(2) << '\n';
    }

    const auto prompts = load_prompts(cfg_.resolve(cfg_.prompts_path));
    const Artifacts have = Artifacts::load(out_dir);
    const std::size_t n = prompts.size();
    const std::size_t fan_out = gateway_->options().max_in_flight;
    Gateway& gw = *gateway_;

    std::unique_ptr<KnowledgeSource> source;
    if (stages.count(Stage::Retrieve) &&
        std::any_of(prompts.begin(), prompts.end(), [&](const auto& p) { return !have.evidence.count(p.prompt_id); })) {
        KnowledgeSourceConfig kcfg = cfg_.knowledge;
        if (kcfg.kind != SourceKind::SearchAdapter) kcfg.location = cfg_.resolve(kcfg.location).string();
        try {
            source = make_knowledge_source(kcfg);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptyCorpus) throw Error(ErrorCode::FatalConfigError, e.what());
            spdlog::warn("{}; every prompt gets empty evidence", e.what());
        }
    }

    const LlmCallOptions extractor{cfg_.gateway.extractor_model, cfg_.gateway.max_tokens};
    const LlmCallOptions judge{cfg_.gateway.judge_model, cfg_.gateway.max_tokens};

    auto build_facts = [&](const EvalPrompt& p, const EvidenceSet& ev) {
        auto chunks = chunk_documents(ev, cfg_.knowledge.chunk_chars);
        std::vector<FactExtraction> per_chunk(chunks.size());
        parallel_for(chunks.size(), fan_out, [&](std::size_t k) { per_chunk[k] = extract_facts(chunks[k], gw, extractor); });
        std::vector<AtomicFact> facts;
        for (auto& fx : per_chunk) {
            for (const auto& w : fx.warnings) spdlog::warn("prompt {}: {}", p.prompt_id, w);
            std::move(fx.facts.begin(), fx.facts.end(), std::back_inserter(facts));
        }
        assign_fact_ids(p.prompt_id, facts);
        if (facts.empty()) {
            spdlog::warn("prompt {}: no facts extracted from {} evidence docs", p.prompt_id, ev.docs.size());
            return facts;
        }
        auto deduped = dedup_facts(facts, cfg_.dedup, &gw);
        return score_importance(std::move(deduped.facts), p.query, cfg_.importance, gw,
                                ScoringOptions{extractor, cfg_.importance_batch_size});
    };

    auto select = [&](const std::string& prompt_id, const std::vector<AtomicFact>& facts) {
        if (!facts.empty()) {
            try {
                return form_reference_set(prompt_id, facts, cfg_.selection);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::EmptyReferenceSet) throw;
            }
        }
        spdlog::warn("prompt {}: empty reference set; recall undefined", prompt_id);
        return ReferenceSet{prompt_id, {}, cfg_.selection};
    };

    std::vector<PromptState> states(n);
    std::map<std::string, FailedPrompt> failures;
    std::mutex failures_mu;
    {
        std::vector<std::unique_ptr<OrderedWriter>> writers;
        for (const char* name : kStageFileNames) writers.push_back(std::make_unique<OrderedWriter>(out_dir / name, n));

        parallel_for(n, cfg_.concurrency, [&](std::size_t i) {
            const EvalPrompt& p = prompts[i];
            const std::string& pid = p.prompt_id;
            PromptState& state = states[i];
            state.prompt_id = pid;
            std::array<bool, kStageFileCount> done{};
            auto emit = [&](StageFile f, const json& line) {
                writers[f]->submit(i, dump_line(line));
                done[f] = true;
            };

            Stage current = Stage::Generate;
            try {
                auto response = lookup(have.responses, pid);
                auto evidence = lookup(have.evidence, pid);
                auto facts = lookup(have.facts, pid);
                auto reference = lookup(have.references, pid);
                auto claims = lookup(have.claims, pid);
                auto verdicts = lookup(have.verdicts, pid);
                auto coverage = lookup(have.coverage, pid);

                if (stages.count(current = Stage::Generate) && !response) {
                    response = generate_response(p, gw, cfg_.gateway);
                    emit(kResponsesFile, *response);
                }
                if (stages.count(current = Stage::Retrieve)) {
                    if (!evidence) {
                        evidence = source ? source->retrieve(p) : EvidenceSet{pid, {}};
                        emit(kEvidenceFile, *evidence);
                    }
                    state.advance(PromptStage::Retrieved);
                }
                if (stages.count(current = Stage::BuildRefs)) {
                    if (!facts) {
                        facts = build_facts(p, need(evidence, artifact::kEvidence));
                        emit(kFactsFile, prompt_line(pid, "facts", *facts));
                    }
                    if (!reference) {
                        reference = select(pid, *facts);
                        emit(kReferencesFile, *reference);
                    }
                    state.advance(PromptStage::FactsBuilt);
                }
                if (stages.count(current = Stage::ExtractClaims)) {
                    if (!claims) {
                        const auto& r = need(response, artifact::kResponses);
                        claims = extract_claims(pid, r.response.value_or(""), gw,
                                                ClaimOptions{extractor, cfg_.context_before, cfg_.context_after, fan_out})
                                     .claims;
                        emit(kClaimsFile, prompt_line(pid, "claims", *claims));
                    }
                    state.advance(PromptStage::ClaimsBuilt);
                }
                if (stages.count(current = Stage::Judge)) {
                    if (!verdicts) {
                        const auto& cs = need(claims, artifact::kClaims);
                        const auto& ev = need(evidence, artifact::kEvidence);
                        std::vector<ClaimVerdict> out(cs.size());
                        VerifyOptions vo{judge, cfg_.evidence_char_budget};
                        parallel_for(cs.size(), fan_out, [&](std::size_t k) { out[k] = verify_claim(cs[k], ev, gw, vo); });
                        verdicts = std::move(out);
                        emit(kVerdictsFile, json{{"prompt_id", pid},
                                                 {"judge_model", judge.model},
                                                 {"template_version", prompts::template_version(prompts::kVerification)},
                                                 {"verdicts", *verdicts}});
                    }
                    if (!coverage) {
                        const auto& fs_ = need(facts, artifact::kFacts);
                        std::vector<AtomicClaim> targets =
                            cfg_.coverage_mode == CoverageMode::Claims
                                ? need(claims, artifact::kClaims)
                                : response_sentences_as_claims(pid, need(response, artifact::kResponses).response.value_or(""));
                        std::vector<FactCoverage> out(fs_.size());
                        CoverageOptions co{judge};
                        parallel_for(fs_.size(), fan_out, [&](std::size_t k) { out[k] = check_coverage(fs_[k], targets, gw, co); });
                        coverage = std::move(out);
                        emit(kCoverageFile, json{{"prompt_id", pid},
                                                 {"judge_model", judge.model},
                                                 {"template_version", prompts::template_version(prompts::kCoverage)},
                                                 {"coverage_mode", to_string(cfg_.coverage_mode)},
                                                 {"coverage", *coverage}});
                    }
                    state.advance(PromptStage::Judged);
                }
            } catch (const std::exception& e) {
                spdlog::error("prompt {} failed at {}: {}", pid, to_string(current), e.what());
                state.fail(e.what());
                std::lock_guard lock(failures_mu);
                failures[pid] = FailedPrompt{pid, std::string(to_string(current)), e.what()};
            }
            for (std::size_t f = 0; f < kStageFileCount; ++f) {
                if (!done[f]) writers[f]->submit(i, std::nullopt);
            }
        });
    }

    RunOutcome outcome;
    if (stages.count(Stage::Score)) {
        RunReport report = score_artifacts(cfg_, prompts, failures);
        write_report_files(report, out_dir);
        for (auto& s : states) {
            bool scored = std::any_of(report.per_prompt.begin(), report.per_prompt.end(),
                                      [&](const PromptMetrics& m) { return m.prompt_id == s.prompt_id; });
            if (scored && s.stage != PromptStage::Failed) s.advance(PromptStage::Scored);
        }
        outcome.failed = report.failed;
        outcome.report = std::move(report);
    } else {
        for (const auto& p : prompts) {
            if (auto it = failures.find(p.prompt_id); it != failures.end()) outcome.failed.push_back(it->second);
        }
    }
    outcome.states = std::move(states);
    outcome.gateway_stats = gateway_->stats();
    return outcome;
}

RunReport score_artifacts(const RunConfig& cfg, const std::vector<EvalPrompt>& prompts,
                          const std::map<std::string, FailedPrompt>& known) {
    const Artifacts have = Artifacts::load(cfg.output_path());
    std::vector<PromptMetrics> per_prompt;
    std::vector<FailedPrompt> failed;
    std::vector<BudgetInput> budget_inputs;

    for (const auto& p : prompts) {
        const std::string& pid = p.prompt_id;
        if (auto it = known.find(pid); it != known.end()) {
            failed.push_back(it->second);
            continue;
        }
        const std::array<bool, kStageFileCount> present = {
            true,  // a response line is not needed once claims exist
            have.evidence.count(pid) > 0, have.facts.count(pid) > 0,    have.references.count(pid) > 0,
            have.claims.count(pid) > 0,   have.verdicts.count(pid) > 0, have.coverage.count(pid) > 0};
        auto missing = std::find(present.begin(), present.end(), false);
        if (missing != present.end()) {
            auto f = static_cast<std::size_t>(missing - present.begin());
            failed.push_back({pid, std::string(to_string(kStageOfFile[f])), fmt::format("no {} line", kStageFileNames[f])});
            continue;
        }
        try {
            const auto& ref = have.references.at(pid);
            const auto& verdicts = have.verdicts.at(pid);
            const auto& coverage = have.coverage.at(pid);
            const auto& facts = have.facts.at(pid);
            if (verdicts.size() != have.claims.at(pid).size()) {
                throw Error(ErrorCode::MisalignedInputs,
                            fmt::format("{} verdicts for {} claims", verdicts.size(), have.claims.at(pid).size()));
            }
            auto metrics = compute_prompt_metrics(pid, verdicts, ref.facts, coverage_for(ref.facts, coverage));
            if (have.evidence.at(pid).docs.empty()) metrics.flags.insert(metrics.flags.begin(), "no_evidence");
            budget_inputs.push_back({pid, facts, coverage_for(facts, coverage)});
            per_prompt.push_back(std::move(metrics));
        } catch (const Error& e) {
            failed.push_back({pid, std::string(to_string(Stage::Score)), e.what()});
        }
    }

    RunReport report;
    try {
        if (per_prompt.empty()) throw Error(ErrorCode::AllUndefined, "no prompt was scored");
        report = macro_aggregate(per_prompt);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::AllUndefined) throw;
        spdlog::warn("{}", e.what());
        report = RunReport{};
        report.per_prompt = per_prompt;
        report.n_prompts = static_cast<int>(per_prompt.size());
        int n = report.n_prompts;
        report.excluded = {n, n, n, n, n, n};
        if (n > 0) {
            double claims = 0.0, facts = 0.0;
            for (const auto& m : per_prompt) {
                claims += m.n_claims;
                facts += m.n_facts;
            }
            report.avg_claims = claims / n;
            report.avg_facts = facts / n;
            if (report.avg_facts > 0.0) report.rho = report.avg_claims / report.avg_facts;
        }
    }
    attach_failures(report, failed);
    report.run_id = cfg.run_id;
    report.domain = cfg.domain;
    report.recall_budgets =
        recall_at_budgets(budget_inputs, cfg.recall_budgets.empty() ? standard_budgets() : cfg.recall_budgets);
    report.config_snapshot = cfg.snapshot();
    return report;
}

RunOutcome run(const RunConfig& cfg, std::shared_ptr<Backend> backend, bool overwrite) {
    cfg.validate();
    const fs::path out_dir = cfg.output_path();
    std::vector<fs::path> existing;
    for (const char* name : kStageFileNames) {
        if (fs::exists(out_dir / name)) existing.push_back(out_dir / name);
    }
    if (!existing.empty() && !overwrite) {
        throw Error(ErrorCode::FatalConfigError,
                    fmt::format("{} already holds run artifacts; use resume, or overwrite", out_dir.string()));
    }
    if (overwrite) {
        for (const char* name : {artifact::kConfig, "report.json", "report.md", "metrics.csv", "breakdown.csv",
                                 "recall_budgets.csv"}) {
            existing.push_back(out_dir / name);
        }
        for (const auto& p : existing) fs::remove(p);
    }
    Runner runner(cfg, std::move(backend));
    return runner.execute(all_stages());
}

RunOutcome resume(const fs::path& run_dir, std::shared_ptr<Backend> backend) {
    const fs::path config_path = run_dir / artifact::kConfig;
    if (!fs::exists(config_path)) {
        throw Error(ErrorCode::FatalConfigError, fmt::format("{} has no {}", run_dir.string(), artifact::kConfig));
    }
    RunConfig cfg = RunConfig::load(config_path);
    cfg.output_dir = fs::absolute(run_dir).string();
    Runner runner(std::move(cfg), std::move(backend));
    return runner.execute(all_stages());
}

}  // namespace factrec
