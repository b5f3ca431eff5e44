// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "factrec/error.hpp"
#include "factrec/judge.hpp"
#include "factrec/metrics.hpp"
#include "factrec/prompts.hpp"
#include "factrec/reference.hpp"
#include "factrec/report.hpp"
#include "factrec/runner.hpp"
#include "test_support.hpp"

using namespace factrec;
using factrec::testing::fixtures_dir;
using factrec::testing::read_text;
using factrec::testing::TempDir;
using factrec::testing::write_text;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kMetricTol = 1e-12;
constexpr double kGoldenTol = 1e-12;
constexpr int kOraclePrompts = 1000;
constexpr double kOracleSeconds = 5.0;
constexpr double kGoldenSeconds = 10.0;
constexpr int kScalingTrials = 200;
constexpr int kDedupTrials = 300;

using Failures = std::vector<std::string>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void expect_close(Failures& f, const std::string& what, const std::optional<double>& got,
                  const std::optional<double>& want, double tol) {
    if (got.has_value() != want.has_value()) {
        f.push_back(fmt::format("{}: defined {} vs expected {}", what, got.has_value(), want.has_value()));
    } else if (got && std::abs(*got - *want) > tol) {
        f.push_back(fmt::format("{}: {:.17g} vs expected {:.17g}", what, *got, *want));
    }
}

void expect_true(Failures& f, bool ok, const std::string& what) {
    if (!ok) f.push_back(what);
}

AtomicFact rated(std::string id, int r, int s, const ImportanceConfig& cfg = {}) {
    AtomicFact f;
    f.fact_id = std::move(id);
    f.text = f.fact_id;
    apply_scores(f, r, s, cfg);
    return f;
}

// --- 1: metric oracle --------------------------------------------------------------

struct Synthetic {
    std::vector<ClaimVerdict> verdicts;
    std::vector<AtomicFact> facts;
    std::vector<FactCoverage> coverage;
};

Synthetic random_prompt(std::mt19937& rng, int p) {
    Synthetic s;
    int n_claims = std::uniform_int_distribution<int>(0, 60)(rng);
    int n_facts = std::uniform_int_distribution<int>(0, 20)(rng);
    std::uniform_real_distribution<double> imp(0.0, 2.0);
    for (int i = 0; i < n_claims; ++i) {
        ClaimVerdict v;
        v.claim_id = fmt::format("p{}:claim:{}", p, i + 1);
        v.label = static_cast<VerdictLabel>(rng() % 3);
        s.verdicts.push_back(v);
    }
    for (int i = 0; i < n_facts; ++i) {
        AtomicFact f;
        f.fact_id = fmt::format("p{}:fact:{}", p, i + 1);
        f.text = f.fact_id;
        // Some all-zero sets keep the zero-total branch of weighted recall honest.
        f.importance = rng() % 7 == 0 ? 0.0 : imp(rng);
        s.facts.push_back(f);
        FactCoverage c;
        c.fact_id = f.fact_id;
        c.label = rng() % 2 ? CoverageLabel::Covered : CoverageLabel::NotCovered;
        s.coverage.push_back(c);
    }
    if (rng() % 9 == 0)
        for (auto& f : s.facts) f.importance = 0.0;
    return s;
}

struct OracleMetrics {
    std::optional<double> prec, c_rate, ns_rate, rec, rec_w, f1;
};

OracleMetrics brute_force(const Synthetic& s) {
    OracleMetrics o;
    int sup = 0, con = 0, ns = 0;
    for (const auto& v : s.verdicts) {
        if (v.label == VerdictLabel::Supported) ++sup;
        if (v.label == VerdictLabel::Contradicted) ++con;
        if (v.label == VerdictLabel::NotSupported) ++ns;
    }
    const double n = static_cast<double>(s.verdicts.size());
    if (n > 0) {
        o.prec = sup / n;
        o.c_rate = con / n;
        o.ns_rate = ns / n;
    }
    double covered = 0, total_w = 0, covered_w = 0;
    for (std::size_t i = 0; i < s.facts.size(); ++i) {
        bool hit = s.coverage[i].label == CoverageLabel::Covered;
        covered += hit;
        total_w += s.facts[i].importance;
        if (hit) covered_w += s.facts[i].importance;
    }
    if (!s.facts.empty()) o.rec = covered / static_cast<double>(s.facts.size());
    if (!s.facts.empty() && total_w > 0) o.rec_w = covered_w / total_w;
    if (o.prec && o.rec) o.f1 = (*o.prec + *o.rec == 0) ? 0.0 : 2 * *o.prec * *o.rec / (*o.prec + *o.rec);
    return o;
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& xs, int& excluded) {
    double sum = 0;
    int n = 0;
    excluded = 0;
    for (const auto& x : xs) {
        if (x) {
            sum += *x;
            ++n;
        } else {
            ++excluded;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

void check_macro(Failures& f, const std::vector<Synthetic>& group, const std::vector<OracleMetrics>& oracle,
                 const std::vector<PromptMetrics>& metrics, const std::string& tag) {
    std::vector<std::optional<double>> prec, rec, rec_w, f1, c, ns;
    double claims = 0, facts = 0;
    for (std::size_t i = 0; i < group.size(); ++i) {
        prec.push_back(oracle[i].prec);
        rec.push_back(oracle[i].rec);
        rec_w.push_back(oracle[i].rec_w);
        f1.push_back(oracle[i].f1);
        c.push_back(oracle[i].c_rate);
        ns.push_back(oracle[i].ns_rate);
        claims += static_cast<double>(group[i].verdicts.size());
        facts += static_cast<double>(group[i].facts.size());
    }
    MetricExclusions ex;
    auto m_prec = mean_defined(prec, ex.prec);
    auto m_rec = mean_defined(rec, ex.rec);
    auto m_rec_w = mean_defined(rec_w, ex.rec_weighted);
    auto m_f1 = mean_defined(f1, ex.f1);
    auto m_c = mean_defined(c, ex.c_rate);
    auto m_ns = mean_defined(ns, ex.ns_rate);
    bool all_undefined = !m_prec && !m_rec && !m_rec_w && !m_f1 && !m_c && !m_ns;

    RunReport r;
    try {
        r = macro_aggregate(metrics);
    } catch (const Error& e) {
        expect_true(f, all_undefined && e.code() == ErrorCode::AllUndefined, tag + ": unexpected " + e.what());
        return;
    }
    expect_true(f, !all_undefined, tag + ": expected AllUndefined");
    expect_close(f, tag + " macro prec", r.macro_prec, m_prec, kMetricTol);
    expect_close(f, tag + " macro rec", r.macro_rec, m_rec, kMetricTol);
    expect_close(f, tag + " macro rec_w", r.macro_rec_weighted, m_rec_w, kMetricTol);
    expect_close(f, tag + " macro f1", r.macro_f1, m_f1, kMetricTol);
    expect_close(f, tag + " macro c_rate", r.macro_c_rate, m_c, kMetricTol);
    expect_close(f, tag + " macro ns_rate", r.macro_ns_rate, m_ns, kMetricTol);
    expect_true(f, r.excluded == ex, tag + ": excluded counts differ");
    const double n = static_cast<double>(group.size());
    expect_close(f, tag + " avg_claims", r.avg_claims, claims / n, kMetricTol);
    expect_close(f, tag + " avg_facts", r.avg_facts, facts / n, kMetricTol);
    expect_close(f, tag + " rho", r.rho, facts > 0 ? std::optional<double>((claims / n) / (facts / n)) : std::nullopt,
                 kMetricTol);
}

Failures criterion_metric_oracle() {
    Failures f;
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(20240601);
    std::vector<Synthetic> all;
    std::vector<OracleMetrics> oracle;
    std::vector<PromptMetrics> metrics;
    for (int p = 0; p < kOraclePrompts; ++p) {
        all.push_back(random_prompt(rng, p));
        const auto& s = all.back();
        oracle.push_back(brute_force(s));
        const auto& o = oracle.back();
        const std::string tag = fmt::format("prompt {}", p);

        expect_close(f, tag + " prec", prompt_precision(s.verdicts), o.prec, kMetricTol);
        auto rates = prompt_rates(s.verdicts);
        expect_close(f, tag + " c_rate", rates ? std::optional(rates->c_rate) : std::nullopt, o.c_rate, kMetricTol);
        expect_close(f, tag + " ns_rate", rates ? std::optional(rates->ns_rate) : std::nullopt, o.ns_rate, kMetricTol);
        expect_close(f, tag + " rec", prompt_recall(s.coverage), o.rec, kMetricTol);
        expect_close(f, tag + " rec_w", prompt_recall_weighted(s.coverage, s.facts), o.rec_w, kMetricTol);
        expect_close(f, tag + " f1", prompt_f1(prompt_precision(s.verdicts), prompt_recall(s.coverage)), o.f1, kMetricTol);

        metrics.push_back(compute_prompt_metrics(fmt::format("p{}", p), s.verdicts, s.facts, s.coverage));
        const auto& m = metrics.back();
        expect_close(f, tag + " row prec", m.prec, o.prec, kMetricTol);
        expect_close(f, tag + " row rec", m.rec, o.rec, kMetricTol);
        expect_close(f, tag + " row rec_w", m.rec_weighted, o.rec_w, kMetricTol);
        expect_close(f, tag + " row f1", m.f1, o.f1, kMetricTol);
        expect_close(f, tag + " row c_rate", m.c_rate, o.c_rate, kMetricTol);
        expect_close(f, tag + " row ns_rate", m.ns_rate, o.ns_rate, kMetricTol);
        if (f.size() > 20) break;
    }
    check_macro(f, all, oracle, metrics, "all prompts");
    // Small runs reach the all-undefined and mostly-excluded corners.
    for (std::size_t start = 0; start + 8 <= all.size(); start += 8) {
        std::size_t len = 1 + start % 8;
        auto sub = [&](const auto& v) { return std::vector(v.begin() + start, v.begin() + start + len); };
        check_macro(f, sub(all), sub(oracle), sub(metrics), fmt::format("run at {}", start));
    }
    double secs = seconds_since(t0);
    expect_true(f, secs < kOracleSeconds, fmt::format("took {:.2f}s", secs));
    return f;
}

// --- 2: edge cases -------------------------------------------------------------------

Failures criterion_edge_cases() {
    Failures f;
    const double grid[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (int r = 1; r <= 5; ++r) expect_true(f, normalize_rating(r) == grid[r - 1], fmt::format("normalize({})", r));
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> w(0.0, 10.0);
    for (int t = 0; t < 100; ++t) {
        ImportanceConfig cfg{w(rng), w(rng) + 1e-3};
        expect_true(f, importance_score(1, 1, cfg) == 0.0, "imp(1,1) != 0");
    }
    for (int t = 0; t < 100; ++t) {
        auto s = random_prompt(rng, t);
        double same = w(rng) + 0.1;
        for (auto& fact : s.facts) fact.importance = same;
        expect_close(f, "equal weights", prompt_recall_weighted(s.coverage, s.facts), prompt_recall(s.coverage), kMetricTol);
        auto rates = prompt_rates(s.verdicts);
        auto prec = prompt_precision(s.verdicts);
        if (rates) expect_close(f, "rates partition", *prec + rates->c_rate + rates->ns_rate, 1.0, kMetricTol);
    }
    expect_true(f, prompt_f1(1.0, 0.0) == 0.0, "F1(1,0) != 0");
    expect_true(f, prompt_f1(0.0, 0.0) == 0.0, "F1(0,0) != 0");
    expect_true(f, !prompt_f1(std::nullopt, 1.0), "F1 with undefined precision is defined");
    return f;
}

// --- 3: ranking invariance ---------------------------------------------------------------

Failures criterion_scaling() {
    Failures f;
    std::mt19937 rng(33);
    std::uniform_real_distribution<double> weight(0.0, 3.0), scale(1e-3, 1e3);
    for (int trial = 0; trial < kScalingTrials; ++trial) {
        std::vector<AtomicFact> facts;
        int n = 1 + static_cast<int>(rng() % 25);
        for (int i = 0; i < n; ++i) {
            facts.push_back(rated(make_id("p", "fact", static_cast<std::size_t>(i + 1)), 1 + static_cast<int>(rng() % 5),
                                  1 + static_cast<int>(rng() % 5)));
        }
        ImportanceConfig base{weight(rng), weight(rng) + 1e-3};
        double c = scale(rng);
        ImportanceConfig scaled{base.alpha * c, base.beta * c};
        for (int k = 1; k <= n; ++k) {
            std::set<std::string> a, b;
            for (const auto& x : form_reference_set("p", rescore(facts, base), SelectionRule::top_k(k)).facts) a.insert(x.fact_id);
            for (const auto& x : form_reference_set("p", rescore(facts, scaled), SelectionRule::top_k(k)).facts) b.insert(x.fact_id);
            if (a != b) f.push_back(fmt::format("trial {} k {} c {:.6g}: sets differ", trial, k, c));
        }
    }
    return f;
}

// --- 4: dedup ---------------------------------------------------------------------------

using Partition = std::set<std::set<std::size_t>>;

double average_link(const SimilarityMatrix& sim, const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    double sum = 0;
    for (auto i : a)
        for (auto j : b) sum += sim[i][j];
    return sum / static_cast<double>(a.size() * b.size());
}

// Best-pair merging with linkage recomputed from the raw matrix every step.
Partition agglomerative_oracle(const SimilarityMatrix& sim, double tau) {
    std::vector<std::set<std::size_t>> clusters;
    for (std::size_t i = 0; i < sim.size(); ++i) clusters.push_back({i});
    while (clusters.size() > 1) {
        double best = -1e300;
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < clusters.size(); ++i) {
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                double s = average_link(sim, clusters[i], clusters[j]);
                if (s > best) {
                    best = s;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (best < tau) break;
        clusters[bi].insert(clusters[bj].begin(), clusters[bj].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    return Partition(clusters.begin(), clusters.end());
}

std::size_t token_count(const std::string& s) {
    std::istringstream in(s);
    std::size_t n = 0;
    for (std::string w; in >> w;) ++n;
    return n;
}

Failures criterion_dedup() {
    Failures f;
    // Three-fact fixture.
    const SimilarityMatrix abc = {{1.0, 0.9, 0.1}, {0.9, 1.0, 0.1}, {0.1, 0.1, 1.0}};
    std::vector<AtomicFact> facts = {rated("p:fact:1", 3, 3), rated("p:fact:2", 3, 3), rated("p:fact:3", 3, 3)};
    facts[0].text = "Curie won the 1903 Nobel Prize.";
    facts[1].text = "Marie Curie won the Nobel Prize in Physics in 1903.";
    facts[2].text = "Curie was born in Warsaw.";
    Partition want = agglomerative_oracle(abc, 0.85);
    expect_true(f, want == Partition{{0, 1}, {2}}, "oracle partition for the fixture");
    Partition got;
    for (const auto& c : agglomerate(abc, 0.85)) got.insert(std::set<std::size_t>(c.begin(), c.end()));
    expect_true(f, got == want, "fixture partition differs from oracle");
    DedupConfig cfg;
    cfg.tau = 0.85;
    auto kept = dedup_with_similarity(facts, abc, cfg);
    std::set<std::string> kept_texts;
    for (const auto& k : kept) kept_texts.insert(k.text);
    // Canonical per cluster: most tokens, then smallest fact_id.
    std::set<std::string> want_texts;
    for (const auto& cluster : want) {
        std::size_t best = *cluster.begin();
        for (auto i : cluster) {
            auto ti = token_count(facts[i].text), tb = token_count(facts[best].text);
            if (ti > tb || (ti == tb && facts[i].fact_id < facts[best].fact_id)) best = i;
        }
        want_texts.insert(facts[best].text);
    }
    expect_true(f, kept_texts == want_texts, "fixture canonical facts differ");

    // Clustering against the oracle on random matrices.
    std::mt19937 rng(404);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < kDedupTrials; ++t) {
        std::size_t n = 1 + rng() % 9;
        SimilarityMatrix m(n, std::vector<double>(n, 1.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) m[i][j] = m[j][i] = u(rng);
        double tau = 0.3 + 0.6 * u(rng);
        Partition p;
        for (const auto& c : agglomerate(m, tau)) p.insert(std::set<std::size_t>(c.begin(), c.end()));
        if (p != agglomerative_oracle(m, tau)) f.push_back(fmt::format("random matrix {} differs from oracle", t));
    }

    // Properties over random fact lists with repeats.
    const std::vector<std::string> vocab = {
        "Marie Curie won the Nobel Prize in Physics in 1903.", "Marie Curie won the Nobel Prize in Physics.",
        "Marie Curie was born in Warsaw.", "Marie Curie was born in Warsaw in 1867.",
        "Adam Brody is an American actor.", "Adam Brody played Seth Cohen.", "The O.C. aired on Fox.",
        "Curie discovered polonium.", "Curie discovered radium and polonium.", "Brody married Leighton Meester."};
    for (int t = 0; t < kDedupTrials; ++t) {
        std::vector<AtomicFact> in;
        std::size_t n = 1 + rng() % 12;
        for (std::size_t i = 0; i < n; ++i) {
            auto x = rated(make_id("p", "fact", i + 1), 3, 3);
            x.text = vocab[rng() % vocab.size()];
            x.source_doc_ids = {fmt::format("d{}", rng() % 3)};
            in.push_back(x);
        }
        DedupConfig c;
        c.similarity = SimilarityKind::CharTrigramJaccard;
        c.tau = 0.4 + 0.5 * u(rng);
        auto once = dedup_facts(in, c, nullptr).facts;
        auto twice = dedup_facts(once, c, nullptr).facts;
        std::vector<std::string> a, b;
        for (const auto& x : once) a.push_back(x.text);
        for (const auto& x : twice) b.push_back(x.text);
        if (a != b) f.push_back(fmt::format("trial {}: not idempotent", t));
        std::set<std::string> input_texts, seen;
        for (const auto& x : in) input_texts.insert(x.text);
        for (const auto& x : once) {
            if (!input_texts.count(x.text)) f.push_back(fmt::format("trial {}: invented text", t));
            if (!seen.insert(x.text).second) f.push_back(fmt::format("trial {}: duplicate survived", t));
        }
    }
    return f;
}

// --- 5, 6: golden run and cache replay ------------------------------------------------

RunConfig golden_config(const fs::path& out) {
    RunConfig cfg = RunConfig::load(fixtures_dir() / "golden" / "config.json");
    cfg.output_dir = out.string();
    return cfg;
}

std::shared_ptr<MockBackend> golden_mock() {
    return MockBackend::from_file(fixtures_dir() / "golden" / "mock_script.json");
}

// Structural equality with numeric tolerance; null and absent are the same.
void compare_json(Failures& f, const json& got, const json& want, const std::string& path) {
    if (want.is_number() && got.is_number()) {
        double g = got.get<double>(), w = want.get<double>();
        if (std::abs(g - w) > kGoldenTol) f.push_back(fmt::format("{}: {:.17g} vs {:.17g}", path, g, w));
    } else if (want.is_object() && got.is_object()) {
        std::set<std::string> keys;
        for (const auto& [k, v] : want.items()) keys.insert(k);
        for (const auto& [k, v] : got.items()) keys.insert(k);
        for (const auto& k : keys) {
            json g = got.contains(k) ? got.at(k) : json();
            json w = want.contains(k) ? want.at(k) : json();
            compare_json(f, g, w, path + "." + k);
        }
    } else if (want.is_array() && got.is_array()) {
        if (want.size() != got.size()) {
            f.push_back(fmt::format("{}: {} items vs {}", path, got.size(), want.size()));
            return;
        }
        for (std::size_t i = 0; i < want.size(); ++i) compare_json(f, got[i], want[i], fmt::format("{}[{}]", path, i));
    } else if (got != want) {
        f.push_back(fmt::format("{}: {} vs {}", path, got.dump(), want.dump()));
    }
}

Failures criterion_golden() {
    Failures f;
    TempDir a, b;
    auto t0 = std::chrono::steady_clock::now();
    auto first = run(golden_config(a / "out"), golden_mock());
    auto second = run(golden_config(b / "out"), golden_mock());
    double secs = seconds_since(t0) / 2;
    expect_true(f, first.exit_code() == 0, "golden run reported failures");
    json got = json::parse(read_text(a / "out" / "report.json"));
    got.erase("config_snapshot");
    json want = json::parse(read_text(fixtures_dir() / "golden" / "expected.json"));
    compare_json(f, got, want, "report");
    expect_true(f, read_text(a / "out" / "report.json") == read_text(b / "out" / "report.json"),
                "two runs gave different report.json bytes");
    expect_true(f, secs < kGoldenSeconds, fmt::format("run took {:.2f}s", secs));
    return f;
}

Failures criterion_cache_replay() {
    Failures f;
    TempDir dir;
    auto cfg = golden_config(dir / "out");
    cfg.gateway.cache_root = (dir / "cache").string();
    auto first_mock = golden_mock();
    run(cfg, first_mock);
    expect_true(f, first_mock->calls() > 0, "first run made no backend calls");
    auto reference = read_text(dir / "out" / "report.json");
    fs::remove_all(dir / "out");

    // A script with no rules refuses everything, so any call would also fail the run.
    auto counting = std::make_shared<MockBackend>();
    auto replay = run(cfg, counting);
    expect_true(f, counting->calls() == 0, fmt::format("replay made {} backend calls", counting->calls()));
    expect_true(f, replay.exit_code() == 0, "replay reported failures");
    expect_true(f, read_text(dir / "out" / "report.json") == reference, "replayed report.json differs");
    return f;
}

// --- 7: coverage schema and templates -------------------------------------------------------

Failures criterion_schema() {
    Failures f;
    auto ok = parse_coverage_reply(R"({"label": "COVERED", "evidence_claim_ids": [2]})", 3);
    expect_true(f, ok.valid && ok.label == CoverageLabel::Covered && ok.evidence_claim_ids == std::vector<int>{2},
                "well-formed COVERED reply");
    auto none = parse_coverage_reply(R"({"label": "NOT_COVERED", "evidence_claim_ids": []})", 3);
    expect_true(f, none.valid && none.label == CoverageLabel::NotCovered && none.warnings.empty(),
                "well-formed NOT_COVERED reply");
    for (const char* bad : {R"({"label": "COVERED"})", R"({"evidence_claim_ids": [1]})",
                            R"({"label": "COVERED", "evidence_claim_ids": [1], "why": "x"})",
                            R"({"label": "MAYBE", "evidence_claim_ids": []})",
                            R"({"label": "COVERED", "evidence_claim_ids": "1"})", "COVERED"}) {
        expect_true(f, !parse_coverage_reply(bad, 3).valid, fmt::format("accepted {}", bad));
    }
    auto coerced = parse_coverage_reply(R"({"label": "NOT_COVERED", "evidence_claim_ids": [1, 2]})", 3);
    expect_true(f, coerced.valid && coerced.evidence_claim_ids.empty() && !coerced.warnings.empty(),
                "NOT_COVERED with ids not coerced with a warning");

    auto mock = std::make_shared<MockBackend>();
    MockRule bad;
    bad.tag = RequestTag::CoverageJudge;
    bad.reply = "Sure! The fact is covered.";
    bad.times = 1;
    mock->add_rule(bad);
    MockRule good;
    good.tag = RequestTag::CoverageJudge;
    good.reply = R"({"label": "COVERED", "evidence_claim_ids": [1]})";
    mock->add_rule(good);
    GatewayOptions go;
    go.retry.base_delay = std::chrono::milliseconds(0);
    Gateway gw(mock, go);
    AtomicFact fact = rated("p:fact:1", 5, 5);
    fact.text = "Marie Curie was born in Warsaw.";
    auto cov = check_coverage(fact, {AtomicClaim{"p:claim:1", 1, "Curie was born in Warsaw."}}, gw, {});
    expect_true(f, cov.label == CoverageLabel::Covered && !cov.judge_failed && mock->calls() == 2,
                "malformed reply not survived by one retry");

    const std::pair<const char*, std::string_view> templates[] = {{"fact_extraction", prompts::kFactExtraction},
                                                                  {"coverage", prompts::kCoverage},
                                                                  {"importance", prompts::kImportance}};
    for (const auto& [name, body] : templates) {
        auto snapshot = read_text(fixtures_dir() / "templates" / (std::string(name) + ".txt"));
        expect_true(f, snapshot == body, fmt::format("template {} differs from its snapshot", name));
    }
    return f;
}

// --- 8: recall at budgets -----------------------------------------------------------

struct BudgetFact {
    int r, s;
    bool covered;
};

BudgetInput budget_input(const std::string& pid, const std::vector<BudgetFact>& specs) {
    BudgetInput in;
    in.prompt_id = pid;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        in.facts.push_back(rated(make_id(pid, "fact", i + 1), specs[i].r, specs[i].s));
        FactCoverage c;
        c.fact_id = in.facts.back().fact_id;
        c.label = specs[i].covered ? CoverageLabel::Covered : CoverageLabel::NotCovered;
        in.coverage.push_back(c);
    }
    return in;
}

// Recall of the unique subset of size min(k, n) whose every member outranks
// every non-member, found by enumerating all subsets.
std::optional<double> exhaustive_recall(const BudgetInput& in, double alpha, double beta, std::size_t k) {
    const std::size_t n = in.facts.size();
    if (n == 0) return std::nullopt;
    k = std::min(k, n);
    auto imp = [&](std::size_t i) {
        return alpha * (in.facts[i].relevance_raw - 1) / 4.0 + beta * (in.facts[i].salience_raw - 1) / 4.0;
    };
    auto outranks = [&](std::size_t i, std::size_t j) {
        return imp(i) > imp(j) || (imp(i) == imp(j) && in.facts[i].fact_id < in.facts[j].fact_id);
    };
    std::optional<double> found;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
        bool valid = true;
        for (std::size_t i = 0; i < n && valid; ++i)
            for (std::size_t j = 0; j < n && valid; ++j)
                if ((mask >> i & 1) && !(mask >> j & 1) && !outranks(i, j)) valid = false;
        if (!valid) continue;
        if (found) return std::nullopt;  // not unique: oracle cannot decide
        int covered = 0;
        for (std::size_t i = 0; i < n; ++i)
            if ((mask >> i & 1) && in.coverage[i].label == CoverageLabel::Covered) ++covered;
        found = static_cast<double>(covered) / static_cast<double>(k);
    }
    return found;
}

std::optional<double> exhaustive_macro(const std::vector<BudgetInput>& inputs, double alpha, double beta, std::size_t k) {
    double sum = 0;
    int n = 0;
    for (const auto& in : inputs) {
        if (auto r = exhaustive_recall(in, alpha, beta, k)) {
            sum += *r;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

void expect_exact(Failures& f, const std::string& what, const std::optional<double>& got, const std::optional<double>& want) {
    expect_close(f, what, got, want, 0.0);
}

Failures criterion_budgets() {
    Failures f;
    // Six facts whose combined, relevance-only and salience-only orders all differ.
    std::vector<BudgetInput> inputs = {
        budget_input("p", {{5, 1, true}, {1, 5, false}, {4, 4, false}, {3, 4, true}, {4, 2, true}, {2, 3, false}})};
    auto order = [&](const ImportanceConfig& w) {
        std::vector<std::string> ids;
        for (const auto& x : form_reference_set("p", rescore(inputs[0].facts, w), SelectionRule::all()).facts)
            ids.push_back(x.fact_id);
        return ids;
    };
    auto co = order({1, 1}), rel = order({1, 0}), sal = order({0, 1});
    expect_true(f, co != rel && co != sal && rel != sal, "instance rankings are not distinct");

    auto rows = recall_at_budgets(inputs, standard_budgets());
    const std::size_t n = inputs[0].facts.size();
    const std::size_t ks[] = {1, 5, n};
    expect_true(f, rows.size() == 3, "expected three budget rows");
    for (std::size_t i = 0; i < rows.size() && i < 3; ++i) {
        auto want_co = exhaustive_macro(inputs, 1, 1, ks[i]);
        auto want_rel = exhaustive_macro(inputs, 1, 0, ks[i]);
        auto want_sal = exhaustive_macro(inputs, 0, 1, ks[i]);
        expect_exact(f, rows[i].budget + " co", rows[i].co, want_co);
        expect_exact(f, rows[i].budget + " rel", rows[i].rel, want_rel);
        expect_exact(f, rows[i].budget + " sal", rows[i].sal, want_sal);
        expect_exact(f, rows[i].budget + " delta rel", rows[i].delta_co_rel, *want_co - *want_rel);
        expect_exact(f, rows[i].budget + " delta sal", rows[i].delta_co_sal, *want_co - *want_sal);
    }

    // Equal relevance and salience everywhere: one ranking, zero deltas.
    std::vector<BudgetInput> same = {budget_input("q", {{5, 5, true}, {2, 2, false}, {4, 4, false}, {3, 3, true},
                                                       {1, 1, true}, {4, 4, true}})};
    auto flat = recall_at_budgets(same, standard_budgets());
    for (const auto& row : flat) {
        expect_exact(f, row.budget + " coinciding delta rel", row.delta_co_rel, 0.0);
        expect_exact(f, row.budget + " coinciding delta sal", row.delta_co_sal, 0.0);
    }
    std::istringstream csv(emit_recall_budgets(flat));
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
        auto tail = line.substr(line.find(',', line.find(',') + 1));
        expect_true(f, tail == ",0.0,0.0", "delta columns not zero: " + line);
    }
    return f;
}

// --- 9: failure isolation through the CLI ----------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
    std::string cmd = fmt::format("\"{}\" {} > \"{}\" 2>&1", FACTREC_CLI, args, log.string());
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Failures criterion_isolation() {
    Failures f;
    TempDir dir;
    const auto golden = fixtures_dir() / "golden";
    auto script = json::parse(read_text(golden / "mock_script.json"));
    // Every verification of an Adam Brody claim fails at the transport level.
    script["rules"].insert(script["rules"].begin(),
                           json{{"tag", "PrecisionJudge"}, {"contains", {"Claim:\nAdam Brody"}}, {"error", "network"}});
    write_text(dir / "broken.json", script.dump(2));

    std::string p2_line;
    std::istringstream prompts(read_text(golden / "prompts.jsonl"));
    for (std::string l; std::getline(prompts, l);)
        if (l.find("\"p2\"") != std::string::npos) p2_line = l;
    write_text(dir / "p2.jsonl", p2_line + "\n");

    const std::string common = fmt::format("run -c \"{}\" --cache-root \"\"", (golden / "config.json").string());
    int code = run_cli(fmt::format("{} -o \"{}\" --mock-script \"{}\"", common, (dir / "both").string(),
                                   (dir / "broken.json").string()),
                       dir / "both.log");
    expect_true(f, code == 2, fmt::format("exit code {} (log: {})", code, read_text(dir / "both.log")));
    int solo = run_cli(fmt::format("{} -o \"{}\" --prompts \"{}\" --mock-script \"{}\"", common, (dir / "solo").string(),
                                   (dir / "p2.jsonl").string(), (golden / "mock_script.json").string()),
                       dir / "solo.log");
    expect_true(f, solo == 0, fmt::format("single-prompt run exit code {}", solo));
    if (!f.empty()) return f;

    json both = json::parse(read_text(dir / "both" / "report.json"));
    json alone = json::parse(read_text(dir / "solo" / "report.json"));
    expect_true(f, both["excluded"]["prec"] == 1 && both["excluded"]["rec"] == 1, "excluded count is not 1");
    expect_true(f, both["failed"].size() == 1 && both["failed"][0]["prompt_id"] == "p1", "p1 not listed as failed");
    expect_true(f, both["per_prompt"].size() == 1 && alone["per_prompt"].size() == 1, "unexpected scored prompts");
    if (f.empty()) {
        expect_true(f, both["per_prompt"][0] == alone["per_prompt"][0],
                    "p2 metrics differ from its single-prompt run: " + both["per_prompt"][0].dump() + " vs " +
                        alone["per_prompt"][0].dump());
    }
    return f;
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::off);
    const std::vector<std::pair<std::string, std::function<Failures()>>> criteria = {
        {"metric oracle equivalence", criterion_metric_oracle},
        {"metric edge cases", criterion_edge_cases},
        {"ranking invariance under weight scaling", criterion_scaling},
        {"dedup properties and clustering oracle", criterion_dedup},
        {"golden end-to-end run", criterion_golden},
        {"cache replay without backend calls", criterion_cache_replay},
        {"coverage schema and template snapshots", criterion_schema},
        {"recall at budgets against exhaustive recomputation", criterion_budgets},
        {"failure isolation", criterion_isolation},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Failures f;
        try {
            f = criteria[i].second();
        } catch (const std::exception& e) {
            f.push_back(std::string("exception: ") + e.what());
        }
        if (f.empty()) {
            std::cout << fmt::format("PASS {}: {}\n", i + 1, criteria[i].first);
        } else {
            ++failed;
            std::cout << fmt::format("FAIL {}: {}\n", i + 1, criteria[i].first);
            for (std::size_t k = 0; k < f.size() && k < 10; ++k) std::cout << "    " << f[k] << "\n";
        }
    }
    return failed == 0 ? 0 : 1;
}
