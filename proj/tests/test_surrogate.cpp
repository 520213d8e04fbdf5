#include "confrank/surrogate.hpp"

#include <gtest/gtest.h>

#include <random>

using confrank::InconsistentSurrogate;
using confrank::InvalidInput;
using confrank::SchemaViolation;
using namespace confrank::surrogate;

namespace {

std::vector<AnswerSample> samples_from_bits(const std::string& prompt_id,
                                            const std::vector<int>& bits) {
    std::vector<AnswerSample> out;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        out.push_back({prompt_id, static_cast<int>(i),
                       "answer " + std::to_string(i), bits[i]});
    }
    return out;
}

}  // namespace

TEST(Correctness, MultipleChoiceLetterExtraction) {
    EXPECT_EQ(correctness("The answer is B.", "B", TaskKind::multiple_choice), 1);
    EXPECT_EQ(correctness("b", "B", TaskKind::multiple_choice), 1);
    EXPECT_EQ(correctness("The answer is C.", "B", TaskKind::multiple_choice), 0);
    EXPECT_EQ(correctness("I pick (D), final answer", "d", TaskKind::multiple_choice), 1);
}

TEST(Correctness, MultipleChoiceFirstStandaloneLetterWins) {
    // "a" inside "answer" is not standalone; the first standalone token is B
    EXPECT_EQ(correctness("answer: B or C", "B", TaskKind::multiple_choice), 1);
    EXPECT_EQ(correctness("answer: B or C", "C", TaskKind::multiple_choice), 0);
}

TEST(Correctness, MultipleChoiceUnextractableGradesZeroWithWarning) {
    const auto graded = grade("I do not know.", "B", TaskKind::multiple_choice);
    EXPECT_EQ(graded.correct, 0);
    EXPECT_TRUE(graded.parse_warning);
}

TEST(Correctness, FreeFormFinalAnswerSpan) {
    EXPECT_EQ(correctness("Answer: 42 people", "42 people", TaskKind::free_form), 1);
    EXPECT_EQ(correctness("Let me think. Answer: 42 people.", "42 people",
                          TaskKind::free_form),
              1);
    EXPECT_EQ(correctness("wrong answer: 41 people", "42 people", TaskKind::free_form), 0);
    EXPECT_EQ(correctness("42 People", "42 people", TaskKind::free_form), 1);
    // the last marker wins
    EXPECT_EQ(correctness("Answer: 13. No wait. Answer: 42 people", "42 people",
                          TaskKind::free_form),
              1);
}

TEST(Correctness, EmptyInputsRejected) {
    EXPECT_THROW(correctness("", "B", TaskKind::multiple_choice), InvalidInput);
    EXPECT_THROW(correctness("B", "", TaskKind::multiple_choice), InvalidInput);
}

TEST(KappaS, MeanOfIndicators) {
    EXPECT_EQ(kappa_s(samples_from_bits("p", {1, 1, 1, 0})), 0.75);
    EXPECT_EQ(kappa_s(samples_from_bits("p", {0, 0, 0, 0})), 0.0);
    EXPECT_EQ(kappa_s(samples_from_bits("p", {1, 0, 1, 0, 1, 0, 1, 1})), 0.625);
}

TEST(KappaS, Errors) {
    EXPECT_THROW(kappa_s({}), InvalidInput);
    auto mixed = samples_from_bits("p", {1, 0});
    mixed[1].prompt_id = "q";
    EXPECT_THROW(kappa_s(mixed), InvalidInput);
    auto bad = samples_from_bits("p", {1});
    bad[0].correct = 2;
    EXPECT_THROW(kappa_s(bad), InvalidInput);
}

TEST(SelectRealized, MajorityRegimePicksFirstCorrect) {
    const auto samples = samples_from_bits("p", {0, 1, 1, 0});
    const auto realized = select_realized(samples, 0.5);
    EXPECT_EQ(realized.sample_index, 1);
    EXPECT_EQ(realized.correct, 1);
}

TEST(SelectRealized, MinorityRegimePicksFirstIncorrect) {
    const auto samples = samples_from_bits("p", {1, 0, 0, 0});
    const auto realized = select_realized(samples, 0.25);
    EXPECT_EQ(realized.sample_index, 1);
    EXPECT_EQ(realized.correct, 0);
}

TEST(SelectRealized, OnlyCorrectCase) {
    const auto realized = select_realized(samples_from_bits("p", {1, 1}), 1.0);
    EXPECT_EQ(realized.sample_index, 0);
}

TEST(SelectRealized, LowestSampleIndexRegardlessOfListOrder) {
    std::vector<AnswerSample> samples{{"p", 3, "late", 1}, {"p", 1, "early", 1},
                                      {"p", 2, "mid", 0}};
    EXPECT_EQ(select_realized(samples, 2.0 / 3.0).sample_index, 1);
}

TEST(SelectRealized, GuardsInconsistentKappa) {
    EXPECT_THROW(select_realized(samples_from_bits("p", {0, 0}), 0.75),
                 InconsistentSurrogate);
}

TEST(BuildSurrogate, ThreePromptFixture) {
    std::vector<PromptRecord> prompts{{"p1", "q1", "B", TaskKind::multiple_choice},
                                      {"p2", "q2", "B", TaskKind::multiple_choice},
                                      {"p3", "q3", "B", TaskKind::multiple_choice}};
    std::vector<AnswerSample> answers;
    const std::vector<std::vector<int>> bits{{1, 1, 1, 1}, {0, 1, 1, 0}, {0, 0, 0, 1}};
    for (std::size_t p = 0; p < bits.size(); ++p) {
        for (const auto& s : samples_from_bits(prompts[p].id, bits[p])) {
            answers.push_back(s);
        }
    }
    const auto records = build_surrogate_dataset(prompts, answers, 4);
    ASSERT_EQ(records.size(), 3u);
    EXPECT_EQ(records[0].kappa_s, 1.0);
    EXPECT_EQ(records[1].kappa_s, 0.5);
    EXPECT_EQ(records[2].kappa_s, 0.25);
    EXPECT_EQ(records[0].realized_correct, 1);
    EXPECT_EQ(records[1].realized_correct, 1);
    EXPECT_EQ(records[2].realized_correct, 0);
    EXPECT_EQ(records[1].realized_sample_index, 1);
    for (const auto& r : records) EXPECT_EQ(r.ensemble_size, 4);
}

TEST(BuildSurrogate, DegenerateEnsembleAndEmptySet) {
    std::vector<PromptRecord> prompts{{"p1", "q", "B", TaskKind::multiple_choice}};
    const auto records =
        build_surrogate_dataset(prompts, samples_from_bits("p1", {1}), 1);
    ASSERT_EQ(records.size(), 1u);
    EXPECT_EQ(records[0].kappa_s, 1.0);
    EXPECT_EQ(records[0].realized_sample_index, 0);

    EXPECT_TRUE(build_surrogate_dataset({}, {}, 4).empty());
}

TEST(BuildSurrogate, SchemaViolationsNameThePrompt) {
    std::vector<PromptRecord> prompts{{"p1", "q", "B", TaskKind::multiple_choice}};
    try {
        build_surrogate_dataset(prompts, samples_from_bits("p1", {1, 0, 1}), 4);
        FAIL() << "expected SchemaViolation";
    } catch (const SchemaViolation& e) {
        EXPECT_NE(std::string(e.what()).find("p1"), std::string::npos);
    }
    // answers for a prompt that is not in the dataset
    EXPECT_THROW(build_surrogate_dataset(prompts, samples_from_bits("ghost", {1}), 1),
                 SchemaViolation);
}

TEST(BuildSurrogate, RegimeConsistencyProperty) {
    std::mt19937_64 gen(61);
    std::vector<PromptRecord> prompts;
    std::vector<AnswerSample> answers;
    const int K = 8;
    for (int p = 0; p < 200; ++p) {
        const std::string id = "p" + std::to_string(p);
        prompts.push_back({id, "q", "B", TaskKind::multiple_choice});
        std::vector<int> bits(K);
        for (auto& b : bits) b = gen() % 2;
        for (const auto& s : samples_from_bits(id, bits)) answers.push_back(s);
    }
    const auto records = build_surrogate_dataset(prompts, answers, K);
    ASSERT_EQ(records.size(), prompts.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        EXPECT_EQ(records[i].prompt_id, prompts[i].id);  // input order preserved
        EXPECT_EQ(records[i].realized_correct, records[i].kappa_s >= 0.5 ? 1 : 0);
        const double scaled = records[i].kappa_s * K;
        EXPECT_EQ(scaled, std::round(scaled));  // kappa on the 1/K grid
    }
}

TEST(BuildSurrogate, Deterministic) {
    std::vector<PromptRecord> prompts{{"p1", "q", "B", TaskKind::multiple_choice}};
    const auto answers = samples_from_bits("p1", {0, 1, 1, 0});
    const auto a = build_surrogate_dataset(prompts, answers, 4);
    const auto b = build_surrogate_dataset(prompts, answers, 4);
    EXPECT_EQ(a[0].realized_sample_index, b[0].realized_sample_index);
    EXPECT_EQ(a[0].realized_answer, b[0].realized_answer);
    EXPECT_EQ(a[0].kappa_s, b[0].kappa_s);
}
