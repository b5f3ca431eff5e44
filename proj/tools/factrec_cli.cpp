// Command-line front end. Exit status: 0 success, 2 some prompts failed, 1 fatal.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "factrec/error.hpp"
#include "factrec/report.hpp"
#include "factrec/runner.hpp"

namespace fs = std::filesystem;
using namespace factrec;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> run_id, prompts, output_dir, mock_script, backend, base_url, cache_root, cache_namespace;
    std::optional<std::string> generator_model, extractor_model, judge_model, selection, similarity, coverage_mode;
    std::optional<std::size_t> concurrency, max_in_flight;
    std::optional<int> top_k;
    std::optional<double> alpha, beta, tau;

    void attach(CLI::App* cmd, bool needs_config) {
        auto* c = cmd->add_option("-c,--config", config, "Run config JSON");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        cmd->add_option("--run-id", run_id);
        cmd->add_option("--prompts", prompts, "Prompt JSONL");
        cmd->add_option("-o,--output-dir", output_dir);
        cmd->add_option("--mock-script", mock_script, "Use the scripted mock backend");
        cmd->add_option("--backend", backend)->check(CLI::IsMember({"mock", "http"}));
        cmd->add_option("--base-url", base_url);
        cmd->add_option("--cache-root", cache_root);
        cmd->add_option("--cache-namespace", cache_namespace);
        cmd->add_option("--generator-model", generator_model);
        cmd->add_option("--extractor-model", extractor_model);
        cmd->add_option("--judge-model", judge_model);
        cmd->add_option("--selection", selection, "all | top_k:N | threshold:X");
        cmd->add_option("--similarity", similarity)->check(CLI::IsMember({"embedding_cosine", "char3_jaccard"}));
        cmd->add_option("--coverage-mode", coverage_mode)->check(CLI::IsMember({"claims", "raw_response"}));
        cmd->add_option("--concurrency", concurrency);
        cmd->add_option("--max-in-flight", max_in_flight);
        cmd->add_option("--top-k", top_k, "Evidence documents per prompt");
        cmd->add_option("--alpha", alpha, "Relevance weight");
        cmd->add_option("--beta", beta, "Salience weight");
        cmd->add_option("--tau", tau, "Dedup merge threshold");
    }

    // Paths given on the command line are relative to the working directory.
    static std::string abs(const std::string& p) { return fs::absolute(p).string(); }

    RunConfig apply(RunConfig cfg) const {
        if (run_id) cfg.run_id = *run_id;
        if (prompts) cfg.prompts_path = abs(*prompts);
        if (output_dir) cfg.output_dir = abs(*output_dir);
        if (mock_script) {
            cfg.gateway.backend = "mock";
            cfg.gateway.mock_script = abs(*mock_script);
        }
        if (backend) cfg.gateway.backend = *backend;
        if (base_url) cfg.gateway.base_url = *base_url;
        if (cache_root) cfg.gateway.cache_root = cache_root->empty() ? "" : abs(*cache_root);
        if (cache_namespace) cfg.gateway.cache_namespace = *cache_namespace;
        if (generator_model) cfg.gateway.generator_model = *generator_model;
        if (extractor_model) cfg.gateway.extractor_model = *extractor_model;
        if (judge_model) cfg.gateway.judge_model = *judge_model;
        if (similarity) cfg.dedup.similarity = *parse_similarity_kind(*similarity);
        if (coverage_mode) {
            json j = cfg.to_json();
            j["coverage_mode"] = *coverage_mode;
            cfg = RunConfig::from_json(j, cfg.base_dir);
        }
        if (concurrency) cfg.concurrency = *concurrency;
        if (max_in_flight) cfg.gateway.max_in_flight = *max_in_flight;
        if (top_k) cfg.knowledge.top_k = *top_k;
        if (alpha) cfg.importance.alpha = *alpha;
        if (beta) cfg.importance.beta = *beta;
        if (tau) cfg.dedup.tau = *tau;
        if (selection) cfg.selection = parse_selection(*selection);
        return cfg;
    }

    static SelectionRule parse_selection(const std::string& s) {
        if (s == "all") return SelectionRule::all();
        auto colon = s.find(':');
        if (colon != std::string::npos) {
            auto head = s.substr(0, colon);
            auto value = s.substr(colon + 1);
            try {
                if (head == "top_k") return SelectionRule::top_k(std::stoi(value));
                if (head == "threshold") return SelectionRule::threshold(std::stod(value));
            } catch (const std::exception&) {
            }
        }
        throw Error(ErrorCode::FatalConfigError, fmt::format("bad --selection '{}'", s));
    }

    RunConfig load() const {
        RunConfig cfg = config.empty() ? RunConfig::from_json(json::object(), fs::current_path()) : RunConfig::load(config);
        return apply(std::move(cfg));
    }
};

void print_summary(const RunOutcome& outcome) {
    if (outcome.report) {
        const auto& r = *outcome.report;
        std::cout << fmt::format("run {}: {} prompts scored, {} failed\n", r.run_id, r.per_prompt.size(), r.failed.size());
        std::cout << fmt::format("prec {}  rec {}  rec_w {}  f1 {}  (%, macro)\n", percent_cell(r.macro_prec),
                                 percent_cell(r.macro_rec), percent_cell(r.macro_rec_weighted), percent_cell(r.macro_f1));
    } else if (!outcome.failed.empty()) {
        std::cout << fmt::format("{} prompts failed\n", outcome.failed.size());
    }
    for (const auto& f : outcome.failed) std::cout << fmt::format("  failed {} at {}: {}\n", f.prompt_id, f.stage, f.reason);
    const auto& s = outcome.gateway_stats;
    std::cout << fmt::format("backend calls: chat {}, embed {}; cache hits {}; peak in flight {}\n", s.chat_calls,
                             s.embed_calls, s.cache_hits, s.peak_in_flight);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Long-form factuality evaluation: precision and recall against retrieved reference facts"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level)->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    struct StageCommand {
        const char* name;
        const char* help;
        std::set<Stage> stages;
    };
    const std::vector<StageCommand> stage_commands = {
        {"generate", "Fill missing responses from the generator model", {Stage::Generate}},
        {"build-refs", "Retrieve evidence and build reference fact sets", {Stage::Retrieve, Stage::BuildRefs}},
        {"extract-claims", "Decompose responses into atomic claims", {Stage::Generate, Stage::ExtractClaims}},
        {"judge", "Verify claims and judge fact coverage", {Stage::Judge}},
        {"score", "Compute metrics and write the report from artifacts", {Stage::Score}},
    };

    std::vector<std::pair<CLI::App*, Overrides>> commands;
    commands.reserve(stage_commands.size() + 1);
    for (const auto& sc : stage_commands) {
        commands.emplace_back(app.add_subcommand(sc.name, sc.help), Overrides{});
    }
    commands.emplace_back(app.add_subcommand("run", "Run every stage from scratch"), Overrides{});
    for (auto& [cmd, ov] : commands) ov.attach(cmd, true);
    bool overwrite = false;
    commands.back().first->add_flag("--overwrite", overwrite, "Delete existing artifacts in the output dir first");

    std::string run_dir;
    std::optional<std::string> resume_mock;
    auto* resume_cmd = app.add_subcommand("resume", "Continue a partial run from its output directory");
    resume_cmd->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);
    resume_cmd->add_option("--mock-script", resume_mock);

    std::string report_dir;
    auto* report_cmd = app.add_subcommand("report", "Re-render Markdown and CSV from a run's report.json");
    report_cmd->add_option("run_dir", report_dir)->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));
    spdlog::set_default_logger(spdlog::stderr_color_mt("factrec"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*report_cmd) {
            std::ifstream in(fs::path(report_dir) / "report.json");
            if (!in) throw Error(ErrorCode::FatalConfigError, "no report.json in " + report_dir);
            RunReport report = json::parse(in).get<RunReport>();
            write_report_files(report, report_dir);
            std::cout << emit_table1({report});
            return 0;
        }
        if (*resume_cmd) {
            std::shared_ptr<Backend> backend;
            if (resume_mock) backend = MockBackend::from_file(*resume_mock);
            auto outcome = resume(run_dir, backend);
            print_summary(outcome);
            return outcome.exit_code();
        }
        for (std::size_t i = 0; i < commands.size(); ++i) {
            auto& [cmd, ov] = commands[i];
            if (!*cmd) continue;
            RunConfig cfg = ov.load();
            RunOutcome outcome = i < stage_commands.size() ? Runner(cfg).execute(stage_commands[i].stages)
                                                           : run(cfg, nullptr, overwrite);
            print_summary(outcome);
            return outcome.exit_code();
        }
    } catch (const std::exception& e) {
        spdlog::critical("{}", e.what());
        return 1;
    }
    return 1;
}
