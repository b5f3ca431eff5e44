#pragma once
// Pipeline orchestration: per-prompt stages with JSONL artifacts, resumable
// runs and per-prompt failure isolation.

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "factrec/gateway.hpp"
#include "factrec/model.hpp"
#include "factrec/reference.hpp"
#include "factrec/retrieval.hpp"

namespace factrec {

namespace artifact {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kResponses = "responses.jsonl";
inline constexpr const char* kEvidence = "evidence.jsonl";
inline constexpr const char* kFacts = "facts.jsonl";
inline constexpr const char* kReferences = "references.jsonl";
inline constexpr const char* kClaims = "claims.jsonl";
inline constexpr const char* kVerdicts = "verdicts.jsonl";
inline constexpr const char* kCoverage = "coverage.jsonl";
}  // namespace artifact

enum class CoverageMode { Claims, RawResponse };

struct GatewayConfig {
    std::string backend = "mock";  // "mock" or "http"
    std::string mock_script;
    std::string base_url;          // empty: from the environment
    std::string generator_model = "gpt-4o-mini";
    std::string extractor_model = "gpt-4o-mini";
    std::string judge_model = "gpt-4o-mini";
    double generation_temperature = 0.7;
    int max_tokens = 2048;
    int generation_max_tokens = 2048;
    std::size_t max_in_flight = 4;
    int max_attempts = 3;
    int backoff_ms = 500;
    std::string cache_root = ".factrec_cache";  // empty: memory only
    std::string cache_namespace = "shared";
};

struct RunConfig {
    std::string run_id = "run";
    std::string domain;
    std::string prompts_path;
    std::string output_dir = "out";
    KnowledgeSourceConfig knowledge;
    ImportanceConfig importance;
    SelectionRule selection;
    DedupConfig dedup;
    GatewayConfig gateway;
    std::size_t importance_batch_size = 40;
    std::size_t evidence_char_budget = 24000;
    CoverageMode coverage_mode = CoverageMode::Claims;
    std::size_t context_before = 1;
    std::size_t context_after = 1;
    std::vector<SelectionRule> recall_budgets;
    std::size_t concurrency = 4;

    // Relative paths resolve against this directory (the config file's).
    std::filesystem::path base_dir;

    static RunConfig from_json(const json& j, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);

    /// Everything, as given, plus base_dir. Written to config.json.
    [[nodiscard]] json to_json() const;
    /// The settings that can change a number in the report. Location-only
    /// settings (output and cache directories, base_dir) are left out so the
    /// same run reproduces byte-identically wherever it is stored.
    [[nodiscard]] json snapshot() const;

    /// Throws FatalConfigError for anything unusable.
    void validate() const;

    [[nodiscard]] std::filesystem::path resolve(const std::string& p) const;
    [[nodiscard]] std::filesystem::path output_path() const { return resolve(output_dir); }
};

enum class Stage { Generate, Retrieve, BuildRefs, ExtractClaims, Judge, Score };

std::string_view to_string(Stage stage);

enum class PromptStage { Pending, Retrieved, FactsBuilt, ClaimsBuilt, Judged, Scored, Failed };

std::string_view to_string(PromptStage stage);

struct PromptState {
    std::string prompt_id;
    PromptStage stage = PromptStage::Pending;
    std::optional<std::string> failure_reason;

    /// Moves forward only; Failed is terminal. Throws PreconditionViolated otherwise.
    void advance(PromptStage next);
    void fail(std::string reason);
};

std::shared_ptr<Backend> make_backend(const RunConfig& cfg);
GatewayOptions make_gateway_options(const RunConfig& cfg);

/// Fills a missing response from the generator model; a prompt that already
/// has one is returned untouched without a call.
EvalPrompt generate_response(const EvalPrompt& prompt, Gateway& gateway, const GatewayConfig& cfg);

struct RunOutcome {
    std::optional<RunReport> report;  // set when the Score stage ran
    std::vector<FailedPrompt> failed;
    std::vector<PromptState> states;
    GatewayStats gateway_stats;

    /// 0 when every prompt went through, 2 when some failed.
    [[nodiscard]] int exit_code() const { return failed.empty() ? 0 : 2; }
};

class Runner {
public:
    /// backend may be supplied to bypass make_backend (tests, embedding).
    explicit Runner(RunConfig cfg, std::shared_ptr<Backend> backend = nullptr);

    /// Runs the given stages for every prompt, skipping work whose artifact
    /// line already exists. Appends new lines only.
    RunOutcome execute(const std::set<Stage>& stages);

    [[nodiscard]] const RunConfig& config() const noexcept { return cfg_; }
    Gateway& gateway() { return *gateway_; }

private:
    RunConfig cfg_;
    std::shared_ptr<Backend> backend_;
    std::unique_ptr<Gateway> gateway_;
};

std::set<Stage> all_stages();

/// Fresh run of every stage. Refuses an output directory that already holds
/// stage artifacts unless overwrite is set, in which case those files go.
RunOutcome run(const RunConfig& cfg, std::shared_ptr<Backend> backend = nullptr, bool overwrite = false);

/// Continues the run stored in run_dir (its config.json), redoing only
/// missing artifact lines, then recomputes the report.
RunOutcome resume(const std::filesystem::path& run_dir, std::shared_ptr<Backend> backend = nullptr);

/// Builds the report purely from the artifacts in the output directory.
/// Prompts lacking an artifact are listed as failed; `known` supplies the
/// reason for prompts that failed in this process.
RunReport score_artifacts(const RunConfig& cfg, const std::vector<EvalPrompt>& prompts,
                          const std::map<std::string, FailedPrompt>& known = {});

/// Reads and validates the prompt file.
std::vector<EvalPrompt> load_prompts(const std::filesystem::path& path);

}  // namespace factrec
