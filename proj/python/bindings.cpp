#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "factrec/error.hpp"
#include "factrec/metrics.hpp"
#include "factrec/prompts.hpp"
#include "factrec/reference.hpp"
#include "factrec/report.hpp"
#include "factrec/runner.hpp"

namespace py = pybind11;
using namespace factrec;

namespace {

// Reports cross the boundary as JSON text; the package decodes them.
std::pair<int, std::optional<std::string>> finish(const RunOutcome& outcome) {
    std::optional<std::string> report;
    if (outcome.report) report = emit_report_json(*outcome.report);
    return {outcome.exit_code(), report};
}

std::vector<ClaimVerdict> verdicts_from(const std::vector<std::string>& labels) {
    std::vector<ClaimVerdict> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto label = parse_verdict_label(labels[i]);
        if (!label) throw Error(ErrorCode::InvalidRecord, "unknown verdict label '" + labels[i] + "'");
        out.push_back({make_id("py", "claim", i + 1), *label, std::nullopt, false});
    }
    return out;
}

std::vector<FactCoverage> coverage_from(const std::vector<bool>& covered) {
    std::vector<FactCoverage> out;
    for (std::size_t i = 0; i < covered.size(); ++i) {
        out.push_back({make_id("py", "fact", i + 1), covered[i] ? CoverageLabel::Covered : CoverageLabel::NotCovered, {},
                       false});
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of the factrec evaluator";

    static py::handle error = py::exception<Error>(m, "FactrecError", PyExc_RuntimeError).release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    m.def(
        "run",
        [](const std::filesystem::path& config, std::optional<std::string> output_dir,
           std::optional<std::filesystem::path> mock_script, bool overwrite) {
            RunConfig cfg = RunConfig::load(config);
            if (output_dir) cfg.output_dir = *output_dir;
            std::shared_ptr<Backend> backend;
            if (mock_script) backend = MockBackend::from_file(*mock_script);
            py::gil_scoped_release release;
            return finish(run(cfg, backend, overwrite));
        },
        py::arg("config"), py::arg("output_dir") = py::none(), py::arg("mock_script") = py::none(),
        py::arg("overwrite") = false);

    m.def(
        "resume",
        [](const std::filesystem::path& run_dir, std::optional<std::filesystem::path> mock_script) {
            std::shared_ptr<Backend> backend;
            if (mock_script) backend = MockBackend::from_file(*mock_script);
            py::gil_scoped_release release;
            return finish(resume(run_dir, backend));
        },
        py::arg("run_dir"), py::arg("mock_script") = py::none());

    m.def("precision", [](const std::vector<std::string>& labels) { return prompt_precision(verdicts_from(labels)); });
    m.def("recall", [](const std::vector<bool>& covered) { return prompt_recall(coverage_from(covered)); });
    m.def("recall_weighted", [](const std::vector<bool>& covered, const std::vector<double>& importances) {
        if (covered.size() != importances.size()) throw Error(ErrorCode::MisalignedInputs, "lengths differ");
        auto cov = coverage_from(covered);
        std::vector<AtomicFact> facts(cov.size());
        for (std::size_t i = 0; i < cov.size(); ++i) {
            facts[i].fact_id = cov[i].fact_id;
            facts[i].importance = importances[i];
        }
        return prompt_recall_weighted(cov, facts);
    });
    m.def("f1", &prompt_f1, py::arg("precision"), py::arg("recall"));
    m.def("normalize_rating", &normalize_rating);
    m.def(
        "importance",
        [](int relevance, int salience, double alpha, double beta) {
            return importance_score(relevance, salience, {alpha, beta});
        },
        py::arg("relevance"), py::arg("salience"), py::arg("alpha") = 1.0, py::arg("beta") = 1.0);

    m.def("trigram_jaccard", &trigram_jaccard);
    m.def("agglomerate", &agglomerate, py::arg("similarity"), py::arg("tau"));

    m.def("template_version", [](const std::string& name) {
        if (name == "fact_extraction") return prompts::template_version(prompts::kFactExtraction);
        if (name == "coverage") return prompts::template_version(prompts::kCoverage);
        if (name == "importance") return prompts::template_version(prompts::kImportance);
        if (name == "verification") return prompts::template_version(prompts::kVerification);
        if (name == "claim_extraction") return prompts::template_version(prompts::kClaimExtraction);
        throw Error(ErrorCode::InvalidRecord, "unknown template '" + name + "'");
    });

    m.def("table1", [](const std::vector<std::string>& report_jsons) {
        std::vector<RunReport> reports;
        for (const auto& j : report_jsons) reports.push_back(json::parse(j).get<RunReport>());
        return emit_table1(reports);
    });
}
