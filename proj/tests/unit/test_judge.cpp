#include <gtest/gtest.h>

#include "factrec/judge.hpp"
#include "factrec/prompts.hpp"
#include "test_support.hpp"

using namespace factrec;

namespace {

const EvidenceSet kBrodyEvidence{
    "p1",
    {EvidenceDoc{"d_brody", "wiki", "Adam Jared Brody (born December 15, 1979) is an American actor.", 1, 3.2}}};

GatewayOptions fast() {
    GatewayOptions o;
    o.retry.base_delay = std::chrono::milliseconds(1);
    return o;
}

MockRule judge_rule(RequestTag tag, std::string needle, std::string reply, std::optional<int> times = std::nullopt) {
    MockRule r;
    r.tag = tag;
    r.contains = {std::move(needle)};
    r.reply = std::move(reply);
    r.times = times;
    return r;
}

AtomicClaim claim(int i, std::string text) { return {make_id("p1", "claim", i), i, std::move(text)}; }

AtomicFact fact(std::string text) {
    AtomicFact f;
    f.fact_id = "p1:fact:1";
    f.text = std::move(text);
    return f;
}

}  // namespace

// --- verification ----------------------------------------------------------------

TEST(Verify, ThreeWayLabels) {
    auto mock = std::make_shared<MockBackend>();
    mock->add_rule(judge_rule(RequestTag::PrecisionJudge, "Claim:\nX was born in 1979.",
                              R"({"label": "SUPPORTED", "rationale": "stated"})"));
    mock->add_rule(judge_rule(RequestTag::PrecisionJudge, "Claim:\nX was born in 1980.",
                              R"({"label": "CONTRADICTED", "rationale": "evidence says 1979"})"));
    mock->add_rule(judge_rule(RequestTag::PrecisionJudge, "Claim:\nY was a chef.", R"({"label": "NOT_SUPPORTED"})"));
    Gateway gw(mock, fast());
    auto a = verify_claim(claim(1, "X was born in 1979."), kBrodyEvidence, gw, {});
    EXPECT_EQ(a.label, VerdictLabel::Supported);
    EXPECT_EQ(a.rationale, "stated");
    EXPECT_EQ(a.claim_id, "p1:claim:1");
    EXPECT_EQ(verify_claim(claim(2, "X was born in 1980."), kBrodyEvidence, gw, {}).label, VerdictLabel::Contradicted);
    auto c = verify_claim(claim(3, "Y was a chef."), kBrodyEvidence, gw, {});
    EXPECT_EQ(c.label, VerdictLabel::NotSupported);
    EXPECT_FALSE(c.judge_failed);
}

TEST(Verify, EmptyEvidenceMakesNoCall) {
    auto mock = std::make_shared<MockBackend>();
    Gateway gw(mock, fast());
    auto v = verify_claim(claim(1, "anything"), EvidenceSet{"p1", {}}, gw, {});
    EXPECT_EQ(v.label, VerdictLabel::NotSupported);
    EXPECT_FALSE(v.judge_failed);
    EXPECT_EQ(mock->calls(), 0u);
}

TEST(Verify, OneRetryThenJudgeFailed) {
    auto mock = std::make_shared<MockBackend>();
    mock->add_rule(judge_rule(RequestTag::PrecisionJudge, "Claim:\nfixable", "The claim is supported.", 1));
    mock->add_rule(judge_rule(RequestTag::PrecisionJudge, "Claim:\nfixable", R"({"label": "SUPPORTED"})"));
    mock->add_rule(judge_rule(RequestTag::PrecisionJudge, "Claim:\nhopeless", R"({"label": "MAYBE"})"));
    Gateway gw(mock, fast());
    auto fixed = verify_claim(claim(1, "fixable"), kBrodyEvidence, gw, {});
    EXPECT_EQ(fixed.label, VerdictLabel::Supported);
    EXPECT_FALSE(fixed.judge_failed);
    auto failed = verify_claim(claim(2, "hopeless"), kBrodyEvidence, gw, {});
    EXPECT_EQ(failed.label, VerdictLabel::NotSupported);
    EXPECT_TRUE(failed.judge_failed);
    EXPECT_EQ(mock->calls(), 4u);
}

TEST(Verify, ReplySchema) {
    EXPECT_TRUE(parse_verdict_reply(R"({"label":"CONTRADICTED"})"));
    EXPECT_TRUE(parse_verdict_reply("```json\n{\"label\":\"SUPPORTED\",\"rationale\":null}\n```"));
    EXPECT_FALSE(parse_verdict_reply(R"({"label":"SUPPORTED","confidence":0.9})"));
    EXPECT_FALSE(parse_verdict_reply(R"({"label":"supported"})"));
    EXPECT_FALSE(parse_verdict_reply(R"({"rationale":"x"})"));
    EXPECT_FALSE(parse_verdict_reply(R"(SUPPORTED)"));
}

TEST(Evidence, RenderOrderAndBudget) {
    EvidenceSet ev{"p", {EvidenceDoc{"a", "s", "alpha", 1, {}}, EvidenceDoc{"b", "s", "béta", 2, {}}}};
    auto full = render_evidence(ev, 1000);
    EXPECT_EQ(full.text, "[1] a\nalpha\n\n[2] b\nbéta");
    EXPECT_EQ(full.docs_used, 2u);
    EXPECT_FALSE(full.truncated);

    // Cut inside the two-byte "é": the partial sequence is dropped.
    auto cut = render_evidence(ev, full.text.size() - 4);
    EXPECT_TRUE(cut.truncated);
    EXPECT_EQ(cut.text, "[1] a\nalpha\n\n[2] b\nb");
    auto first_only = render_evidence(ev, 8);
    EXPECT_EQ(first_only.text, "[1] a\nal");
    EXPECT_EQ(first_only.docs_used, 1u);
}

// --- coverage --------------------------------------------------------------------

TEST(CoverageSchema, ExactKeysOnly) {
    auto ok = parse_coverage_reply(R"({"label": "COVERED", "evidence_claim_ids": [2]})", 3);
    EXPECT_TRUE(ok.valid);
    EXPECT_EQ(ok.label, CoverageLabel::Covered);
    EXPECT_EQ(ok.evidence_claim_ids, std::vector<int>{2});
    EXPECT_TRUE(ok.warnings.empty());

    EXPECT_FALSE(parse_coverage_reply(R"({"label": "COVERED"})", 3).valid);
    EXPECT_FALSE(parse_coverage_reply(R"({"label": "COVERED", "evidence_claim_ids": [1], "why": "x"})", 3).valid);
    EXPECT_FALSE(parse_coverage_reply(R"({"label": "covered", "evidence_claim_ids": [1]})", 3).valid);
    EXPECT_FALSE(parse_coverage_reply(R"({"label": "COVERED", "evidence_claim_ids": ["1"]})", 3).valid);
    EXPECT_FALSE(parse_coverage_reply(R"({"label": "COVERED", "evidence_claim_ids": 1})", 3).valid);
    EXPECT_FALSE(parse_coverage_reply(R"([{"label": "COVERED", "evidence_claim_ids": [1]}])", 3).valid);
    EXPECT_FALSE(parse_coverage_reply("COVERED", 3).valid);
}

TEST(CoverageSchema, NotCoveredWithIdsIsCoerced) {
    auto r = parse_coverage_reply(R"({"label": "NOT_COVERED", "evidence_claim_ids": [1, 2]})", 3);
    EXPECT_TRUE(r.valid);
    EXPECT_EQ(r.label, CoverageLabel::NotCovered);
    EXPECT_TRUE(r.evidence_claim_ids.empty());
    EXPECT_EQ(r.warnings.size(), 1u);
    auto clean = parse_coverage_reply(R"({"label": "NOT_COVERED", "evidence_claim_ids": []})", 3);
    EXPECT_TRUE(clean.valid);
    EXPECT_TRUE(clean.warnings.empty());
}

TEST(CoverageSchema, CoveredIdRules) {
    EXPECT_FALSE(parse_coverage_reply(R"({"label": "COVERED", "evidence_claim_ids": []})", 3).valid);
    auto dropped = parse_coverage_reply(R"({"label": "COVERED", "evidence_claim_ids": [0, 3, 4, 3]})", 3);
    EXPECT_TRUE(dropped.valid);
    EXPECT_EQ(dropped.evidence_claim_ids, std::vector<int>{3});
    EXPECT_EQ(dropped.warnings.size(), 2u);
    auto none_left = parse_coverage_reply(R"({"label": "COVERED", "evidence_claim_ids": [7]})", 3);
    EXPECT_TRUE(none_left.valid);
    EXPECT_EQ(none_left.label, CoverageLabel::NotCovered);
    EXPECT_EQ(none_left.warnings.size(), 2u);
}

TEST(Coverage, CoveredByTheBirthClaim) {
    std::vector<AtomicClaim> claims = {claim(1, "Adam Brody is an actor."),
                                       claim(2, "Adam Jared Brody was born on December 15, 1979.")};
    auto mock = std::make_shared<MockBackend>();
    mock->add_rule(judge_rule(RequestTag::CoverageJudge, "Fact:\nborn December 15, 1979\n",
                              R"({"label": "COVERED", "evidence_claim_ids": [2]})"));
    mock->add_rule(judge_rule(RequestTag::CoverageJudge, "Fact:\nBrody won a Critics' Choice award\n",
                              R"({"label": "NOT_COVERED", "evidence_claim_ids": []})"));
    Gateway gw(mock, fast());
    auto cov = check_coverage(fact("born December 15, 1979"), claims, gw, {});
    EXPECT_EQ(cov.label, CoverageLabel::Covered);
    EXPECT_EQ(cov.evidence_claim_indices, std::vector<int>{2});
    EXPECT_EQ(cov.fact_id, "p1:fact:1");
    auto award = check_coverage(fact("Brody won a Critics' Choice award"), claims, gw, {});
    EXPECT_EQ(award.label, CoverageLabel::NotCovered);
    EXPECT_TRUE(award.evidence_claim_indices.empty());
}

TEST(Coverage, JointEntailmentKeepsBothIds) {
    std::vector<AtomicClaim> claims = {claim(1, "X won award A."), claim(2, "Y is a city."), claim(3, "X's win came in 2001.")};
    auto mock = std::make_shared<MockBackend>();
    mock->add_rule(judge_rule(RequestTag::CoverageJudge, "1. X won award A.\n2. Y is a city.\n3. X's win came in 2001.",
                              R"({"label": "COVERED", "evidence_claim_ids": [1, 3]})"));
    Gateway gw(mock, fast());
    auto cov = check_coverage(fact("X won award A in 2001."), claims, gw, {});
    EXPECT_EQ(cov.label, CoverageLabel::Covered);
    EXPECT_EQ(cov.evidence_claim_indices, (std::vector<int>{1, 3}));
}

TEST(Coverage, SurvivesOneMalformedReply) {
    auto mock = std::make_shared<MockBackend>();
    mock->add_rule(judge_rule(RequestTag::CoverageJudge, "Fact:", "Label: COVERED (claim 1)", 1));
    mock->add_rule(judge_rule(RequestTag::CoverageJudge, std::string(prompts::kJsonReminder),
                              R"({"label": "COVERED", "evidence_claim_ids": [1]})"));
    Gateway gw(mock, fast());
    auto cov = check_coverage(fact("f"), {claim(1, "c")}, gw, {});
    EXPECT_EQ(cov.label, CoverageLabel::Covered);
    EXPECT_FALSE(cov.judge_failed);
    EXPECT_EQ(mock->calls(), 2u);
}

TEST(Coverage, PersistentFailureIsFlagged) {
    auto mock = std::make_shared<MockBackend>();
    mock->add_rule(judge_rule(RequestTag::CoverageJudge, "Fact:", R"({"label": "COVERED", "evidence_claim_ids": []})"));
    Gateway gw(mock, fast());
    auto cov = check_coverage(fact("f"), {claim(1, "c")}, gw, {});
    EXPECT_EQ(cov.label, CoverageLabel::NotCovered);
    EXPECT_TRUE(cov.judge_failed);
}

TEST(Coverage, NoClaimsMakesNoCall) {
    auto mock = std::make_shared<MockBackend>();
    Gateway gw(mock, fast());
    auto cov = check_coverage(fact("f"), {}, gw, {});
    EXPECT_EQ(cov.label, CoverageLabel::NotCovered);
    EXPECT_FALSE(cov.judge_failed);
    EXPECT_EQ(mock->calls(), 0u);
}

TEST(Coverage, ResponseSentencesAsClaims) {
    auto claims = response_sentences_as_claims("p1", "One fact. Two facts!");
    ASSERT_EQ(claims.size(), 2u);
    EXPECT_EQ(claims[1].claim_id, "p1:sentence:2");
    EXPECT_EQ(claims[1].text, "Two facts!");
}
