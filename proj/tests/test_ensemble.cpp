#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "support.hpp"
#include "uqbench/ensemble.hpp"

using namespace uqbench;

namespace {

MemberPredictionSet make_set(std::vector<ProbabilityVector> vectors) {
    MemberPredictionSet s{"img", {}};
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        s.entries.push_back({"m" + std::to_string(i), std::move(vectors[i])});
    }
    return s;
}

// Brute-force elementwise mean and first-maximum argmax.
ProbabilityVector mean_oracle(const std::vector<ProbabilityVector>& v) {
    ProbabilityVector out(v[0].size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        long double s = 0;
        for (const auto& p : v) s += p[i];
        out[i] = static_cast<double>(s / v.size());
    }
    return out;
}

std::size_t first_max(const ProbabilityVector& p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

} // namespace

TEST(ProbabilisticAverage, Examples) {
    const ProbabilityVector p{0.1, 0.6, 0.3};
    EXPECT_EQ(probabilistic_average(make_set({p, p, p})), p);
    const auto half = probabilistic_average(make_set({{1, 0}, {0, 1}}));
    EXPECT_DOUBLE_EQ(half[0], 0.5);
    EXPECT_DOUBLE_EQ(half[1], 0.5);
}

TEST(ProbabilisticAverage, WeightsAndErrors) {
    const auto s = make_set({{1, 0}, {0, 1}});
    const auto w = probabilistic_average(s, std::vector<double>{3, 1});
    EXPECT_DOUBLE_EQ(w[0], 0.75);
    EXPECT_THROW(probabilistic_average(s, std::vector<double>{1}), Error);
    EXPECT_THROW(probabilistic_average(s, std::vector<double>{1, -1}), Error);
    EXPECT_THROW(probabilistic_average(s, std::vector<double>{0, 0}), Error);
    EXPECT_THROW(probabilistic_average(make_set({})), Error);
    EXPECT_THROW(probabilistic_average(make_set({{0.5, 0.5}, {1, 0, 0}})), Error);
    MemberPredictionSet dup{"x", {{"a", {1.0}}, {"a", {1.0}}}};
    EXPECT_THROW(probabilistic_average(dup), Error);
}

TEST(ProbabilisticAverage, ValidPermutationInvariantAndMatchesOracle) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 1 + rng() % 10, n = 1 + rng() % 7;
        std::vector<ProbabilityVector> v;
        for (std::size_t m = 0; m < n; ++m) v.push_back(uqtest::random_simplex(rng, k));
        const auto got = probabilistic_average(make_set(v));
        const auto oracle = mean_oracle(v);
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            ASSERT_NEAR(got[i], oracle[i], 1e-12);
            ASSERT_GE(got[i], 0.0);
            sum += got[i];
        }
        ASSERT_NEAR(sum, 1.0, 1e-9);
        std::shuffle(v.begin(), v.end(), rng);
        const auto shuffled = probabilistic_average(make_set(v));
        for (std::size_t i = 0; i < k; ++i) ASSERT_NEAR(shuffled[i], got[i], 1e-15);
    }
}

TEST(EnsemblePredict, Examples) {
    const auto one_hot = ensemble_predict(make_set({{0, 0, 1}, {0, 0, 1}}));
    EXPECT_EQ(one_hot.index, 2u);
    EXPECT_DOUBLE_EQ(one_hot.probability, 1.0);
    const auto p = ensemble_predict(make_set({{0.6, 0.4}, {0.2, 0.8}, {0.5, 0.5}}));
    EXPECT_EQ(p.index, 1u);
    EXPECT_NEAR(p.probability, 0.5667, 1e-4);
    EXPECT_EQ(ensemble_predict(make_set({{0.5, 0.5}})).index, 0u);
    EXPECT_THROW(ensemble_predict(make_set({})), Error);
    const auto named = ensemble_predict(make_set({{0, 1}}), uqtest::small_catalog(2));
    EXPECT_EQ(named.name, "c1");
}

TEST(Votes, ChainsawRowHasNoMajorityAndTies) {
    const auto& c = uqtest::imagenet();
    const std::vector<ClassIndex> labels{c.resolve("chainsaw"), c.resolve("wheelbarrow"), c.resolve("wheelbarrow"),
                                         c.resolve("greenhouse"), c.resolve("chainsaw")};
    EXPECT_EQ(majority_vote(labels), VoteOutcome::no_majority());
    EXPECT_EQ(plurality_vote(labels), VoteOutcome::tie({c.resolve("chainsaw"), c.resolve("wheelbarrow")}));
    EXPECT_EQ(describe(plurality_vote(labels), c), "tie: barrow / chain saw");
}

TEST(Votes, SmallExamples) {
    EXPECT_EQ(majority_vote({0, 0, 0, 1, 2}), VoteOutcome::decision(0));
    EXPECT_EQ(majority_vote({0, 0, 1, 1}), VoteOutcome::no_majority());
    EXPECT_EQ(plurality_vote({0, 0, 1}), VoteOutcome::decision(0));
    EXPECT_EQ(plurality_vote({0, 1, 2}), VoteOutcome::tie({0, 1, 2}));
    EXPECT_THROW(majority_vote({}), Error);
    EXPECT_THROW(plurality_vote({}), Error);
}

TEST(Votes, MajorityImpliesPlurality) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<ClassIndex> labels(1 + rng() % 7);
        for (auto& l : labels) l = rng() % 4;
        const auto maj = majority_vote(labels);
        const auto plu = plurality_vote(labels);
        if (maj.kind == VoteOutcome::Kind::decision) {
            ASSERT_EQ(plu, maj);
        }
        if (plu.kind == VoteOutcome::Kind::tie) {
            ASSERT_GE(plu.tied_classes->size(), 2u);
            ASSERT_FALSE(plu.decided_class);
        }
        if (maj.kind == VoteOutcome::Kind::no_majority) {
            ASSERT_FALSE(maj.decided_class);
            ASSERT_FALSE(maj.tied_classes);
        }
    }
}

TEST(Votes, MemberVotesAreArgmaxes) {
    const auto s = make_set({{0.1, 0.9}, {0.5, 0.5}, {0.7, 0.3}});
    EXPECT_EQ(member_votes(s), (std::vector<ClassIndex>{1, 0, 0}));
    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
        const auto p = uqtest::random_simplex(rng, 1 + rng() % 9);
        ASSERT_EQ(argmax(p), first_max(p));
    }
}
