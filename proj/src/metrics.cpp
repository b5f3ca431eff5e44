#include "factrec/metrics.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "factrec/error.hpp"
#include "factrec/reference.hpp"

namespace factrec {

namespace {

int count_label(const std::vector<ClaimVerdict>& verdicts, VerdictLabel label) {
    return static_cast<int>(std::count_if(verdicts.begin(), verdicts.end(),
                                          [&](const ClaimVerdict& v) { return v.label == label; }));
}

int count_covered(const std::vector<FactCoverage>& coverage) {
    return static_cast<int>(std::count_if(coverage.begin(), coverage.end(),
                                          [](const FactCoverage& c) { return c.label == CoverageLabel::Covered; }));
}

// Running mean over defined values plus the count of undefined ones.
struct MeanAcc {
    double sum = 0.0;
    int n = 0;
    int excluded = 0;

    void add(const std::optional<double>& v) {
        if (v) {
            sum += *v;
            ++n;
        } else {
            ++excluded;
        }
    }
    [[nodiscard]] std::optional<double> mean() const {
        return n > 0 ? std::optional<double>(sum / n) : std::nullopt;
    }
};

}  // namespace

std::optional<double> prompt_precision(const std::vector<ClaimVerdict>& verdicts) {
    if (verdicts.empty()) return std::nullopt;
    return static_cast<double>(count_label(verdicts, VerdictLabel::Supported)) / static_cast<double>(verdicts.size());
}

std::optional<LabelRates> prompt_rates(const std::vector<ClaimVerdict>& verdicts) {
    if (verdicts.empty()) return std::nullopt;
    const double n = static_cast<double>(verdicts.size());
    return LabelRates{count_label(verdicts, VerdictLabel::Contradicted) / n,
                      count_label(verdicts, VerdictLabel::NotSupported) / n};
}

std::optional<double> prompt_recall(const std::vector<FactCoverage>& coverage) {
    if (coverage.empty()) return std::nullopt;
    return static_cast<double>(count_covered(coverage)) / static_cast<double>(coverage.size());
}

std::optional<double> prompt_recall_weighted(const std::vector<FactCoverage>& coverage,
                                             const std::vector<AtomicFact>& facts) {
    if (coverage.size() != facts.size()) {
        throw Error(ErrorCode::MisalignedInputs,
                    fmt::format("{} coverage labels for {} facts", coverage.size(), facts.size()));
    }
    std::map<std::string_view, const FactCoverage*> by_id;
    for (const auto& c : coverage) {
        if (!by_id.emplace(c.fact_id, &c).second) {
            throw Error(ErrorCode::MisalignedInputs, fmt::format("duplicate coverage for fact {}", c.fact_id));
        }
    }
    double total = 0.0;
    double covered = 0.0;
    for (const auto& f : facts) {
        auto it = by_id.find(f.fact_id);
        if (it == by_id.end()) throw Error(ErrorCode::MisalignedInputs, fmt::format("no coverage for fact {}", f.fact_id));
        total += f.importance;
        if (it->second->label == CoverageLabel::Covered) covered += f.importance;
    }
    if (facts.empty() || total <= 0.0) return std::nullopt;
    return covered / total;
}

std::optional<double> prompt_f1(std::optional<double> prec, std::optional<double> rec) {
    if (!prec || !rec) return std::nullopt;
    if (*prec + *rec == 0.0) return 0.0;
    return 2.0 * *prec * *rec / (*prec + *rec);
}

std::vector<FactCoverage> coverage_for(const std::vector<AtomicFact>& facts, const std::vector<FactCoverage>& coverage) {
    std::map<std::string_view, const FactCoverage*> by_id;
    for (const auto& c : coverage) by_id.emplace(c.fact_id, &c);
    std::vector<FactCoverage> out;
    out.reserve(facts.size());
    for (const auto& f : facts) {
        auto it = by_id.find(f.fact_id);
        if (it == by_id.end()) throw Error(ErrorCode::MisalignedInputs, fmt::format("no coverage for fact {}", f.fact_id));
        out.push_back(*it->second);
    }
    return out;
}

PromptMetrics compute_prompt_metrics(std::string_view prompt_id, const std::vector<ClaimVerdict>& verdicts,
                                     const std::vector<AtomicFact>& reference_facts,
                                     const std::vector<FactCoverage>& coverage) {
    PromptMetrics m;
    m.prompt_id = std::string(prompt_id);
    m.n_claims = static_cast<int>(verdicts.size());
    m.n_facts = static_cast<int>(reference_facts.size());
    m.n_supported = count_label(verdicts, VerdictLabel::Supported);
    m.n_contradicted = count_label(verdicts, VerdictLabel::Contradicted);
    m.n_not_supported = count_label(verdicts, VerdictLabel::NotSupported);
    m.n_covered = count_covered(coverage);
    m.prec = prompt_precision(verdicts);
    m.rec = prompt_recall(coverage);
    m.rec_weighted = prompt_recall_weighted(coverage, reference_facts);
    m.f1 = prompt_f1(m.prec, m.rec);
    if (auto rates = prompt_rates(verdicts)) {
        m.c_rate = rates->c_rate;
        m.ns_rate = rates->ns_rate;
    }

    if (m.n_claims == 0) m.flags.emplace_back("no_claims");
    if (m.n_facts == 0) m.flags.emplace_back("no_reference_facts");
    bool judge_failed = std::any_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.judge_failed; }) ||
                        std::any_of(coverage.begin(), coverage.end(), [](const auto& c) { return c.judge_failed; });
    if (judge_failed) m.flags.emplace_back("judge_failed");
    if (std::any_of(reference_facts.begin(), reference_facts.end(), [](const auto& f) { return f.score_defaulted; })) {
        m.flags.emplace_back("score_defaulted");
    }
    return m;
}

RunReport macro_aggregate(const std::vector<PromptMetrics>& per_prompt) {
    MeanAcc prec, rec, rec_w, f1, c_rate, ns_rate;
    double claims = 0.0, facts = 0.0;
    long long supported = 0, contradicted = 0, not_supported = 0;
    for (const auto& m : per_prompt) {
        prec.add(m.prec);
        rec.add(m.rec);
        rec_w.add(m.rec_weighted);
        f1.add(m.f1);
        c_rate.add(m.c_rate);
        ns_rate.add(m.ns_rate);
        claims += m.n_claims;
        facts += m.n_facts;
        supported += m.n_supported;
        contradicted += m.n_contradicted;
        not_supported += m.n_not_supported;
    }
    if (prec.n + rec.n + rec_w.n + f1.n + c_rate.n + ns_rate.n == 0) {
        throw Error(ErrorCode::AllUndefined, "no prompt has a defined metric");
    }

    RunReport r;
    r.per_prompt = per_prompt;
    r.n_prompts = static_cast<int>(per_prompt.size());
    r.macro_prec = prec.mean();
    r.macro_rec = rec.mean();
    r.macro_rec_weighted = rec_w.mean();
    r.macro_f1 = f1.mean();
    r.macro_c_rate = c_rate.mean();
    r.macro_ns_rate = ns_rate.mean();
    r.excluded = {prec.excluded, rec.excluded, rec_w.excluded, f1.excluded, c_rate.excluded, ns_rate.excluded};
    r.avg_claims = claims / static_cast<double>(per_prompt.size());
    r.avg_facts = facts / static_cast<double>(per_prompt.size());
    if (r.avg_facts > 0.0) r.rho = r.avg_claims / r.avg_facts;
    const double pooled = static_cast<double>(supported + contradicted + not_supported);
    if (pooled > 0.0) {
        r.micro_supported_rate = static_cast<double>(supported) / pooled;
        r.micro_contradicted_rate = static_cast<double>(contradicted) / pooled;
        r.micro_not_supported_rate = static_cast<double>(not_supported) / pooled;
    }
    return r;
}

void attach_failures(RunReport& report, const std::vector<FailedPrompt>& failed) {
    const int n = static_cast<int>(failed.size());
    report.failed = failed;
    report.excluded.prec += n;
    report.excluded.rec += n;
    report.excluded.rec_weighted += n;
    report.excluded.f1 += n;
    report.excluded.c_rate += n;
    report.excluded.ns_rate += n;
}

std::vector<Weighting> standard_weightings() {
    return {{"combined", {1.0, 1.0}}, {"relevance", {1.0, 0.0}}, {"salience", {0.0, 1.0}}};
}

std::vector<SelectionRule> standard_budgets() {
    return {SelectionRule::top_k(1), SelectionRule::top_k(5), SelectionRule::all()};
}

std::optional<double> recall_under(const std::vector<BudgetInput>& inputs, const ImportanceConfig& weighting,
                                   const SelectionRule& budget) {
    MeanAcc acc;
    for (const auto& in : inputs) {
        if (in.facts.empty()) continue;
        auto scored = rescore(in.facts, weighting);
        try {
            auto ref = form_reference_set(in.prompt_id, std::move(scored), budget);
            acc.add(prompt_recall(coverage_for(ref.facts, in.coverage)));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptyReferenceSet) throw;
        }
    }
    return acc.mean();
}

std::vector<RecallBudgetRow> recall_at_budgets(const std::vector<BudgetInput>& inputs,
                                               const std::vector<SelectionRule>& budgets) {
    auto weightings = standard_weightings();
    std::vector<RecallBudgetRow> rows;
    for (const auto& budget : budgets) {
        RecallBudgetRow row;
        row.budget = budget.label();
        row.co = recall_under(inputs, weightings[0].cfg, budget);
        row.rel = recall_under(inputs, weightings[1].cfg, budget);
        row.sal = recall_under(inputs, weightings[2].cfg, budget);
        if (row.co && row.rel) row.delta_co_rel = *row.co - *row.rel;
        if (row.co && row.sal) row.delta_co_sal = *row.co - *row.sal;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace factrec
