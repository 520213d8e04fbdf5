#include "confrank/rank_stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using confrank::DegenerateSeries;
using confrank::InsufficientData;
using confrank::InvalidInput;
using namespace confrank::rank_stats;

TEST(Rank, DistinctValues) {
    const std::vector<double> v{3.0, 1.0, 2.0};
    EXPECT_EQ(rank(v), (std::vector<double>{3.0, 1.0, 2.0}));
}

TEST(Rank, TwoWayTie) {
    const std::vector<double> v{5.0, 5.0};
    EXPECT_EQ(rank(v), (std::vector<double>{1.5, 1.5}));
}

TEST(Rank, FractionalTies) {
    const std::vector<double> v{0.1, 0.3, 0.3, 0.9};
    EXPECT_EQ(rank(v), (std::vector<double>{1.0, 2.5, 2.5, 4.0}));
}

TEST(Rank, Errors) {
    EXPECT_THROW(rank(std::vector<double>{}), InvalidInput);
    EXPECT_THROW(rank(std::vector<double>{1.0, std::nan("")}), InvalidInput);
    EXPECT_THROW(rank(std::vector<double>{1.0, INFINITY}), InvalidInput);
}

TEST(Rank, SumIsExact) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> coarse(0, 5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + gen() % 40;
        std::vector<double> v(n);
        for (auto& x : v) x = (trial % 2 == 0) ? u(gen) : coarse(gen) / 5.0;
        const auto r = rank(v);
        double sum = 0.0;
        for (double x : r) sum += x;
        EXPECT_EQ(sum, 0.5 * static_cast<double>(n) * static_cast<double>(n + 1));
        // order isomorphism
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (v[i] < v[j]) {
                    EXPECT_LT(r[i], r[j]);
                }
            }
        }
    }
}

TEST(Spearman, PerfectOrderings) {
    EXPECT_EQ(spearman(std::vector<double>{0.1, 0.2, 0.3},
                       std::vector<double>{0.2, 0.4, 0.6}),
              1.0);
    EXPECT_EQ(spearman(std::vector<double>{0.1, 0.2, 0.3},
                       std::vector<double>{0.6, 0.4, 0.2}),
              -1.0);
}

TEST(Spearman, ClosedFormExample) {
    EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4},
                         std::vector<double>{2, 1, 4, 3}),
                0.6, 1e-15);
}

TEST(Spearman, Errors) {
    EXPECT_THROW(spearman(std::vector<double>{1.0}, std::vector<double>{1.0}),
                 InsufficientData);
    EXPECT_THROW(spearman(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 2.0}),
                 DegenerateSeries);
    EXPECT_THROW(spearman(std::vector<double>{1.0, 2.0}, std::vector<double>{3.0}),
                 InvalidInput);
}

TEST(Spearman, MatchesCountingOracleWithTies) {
    std::mt19937_64 gen(11);
    std::uniform_int_distribution<int> coarse(0, 7);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + gen() % 30;
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = coarse(gen) / 7.0;
            b[i] = coarse(gen) / 7.0;
        }
        try {
            const double got = spearman(a, b);
            EXPECT_NEAR(got, oracles::spearman(a, b), 1e-12);
        } catch (const DegenerateSeries&) {
            // constant list drawn; oracle would divide by zero as well
        }
    }
}

TEST(Spearman, TieFreeClosedForm) {
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + gen() % 20;
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = u(gen);
            b[i] = u(gen);
        }
        EXPECT_NEAR(spearman(a, b), oracles::spearman_closed_form(a, b), 1e-12);
    }
}

TEST(Spearman, SignSymmetryExact) {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + gen() % 50;
        std::vector<double> a(n), b(n), neg(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = u(gen);
            b[i] = u(gen);
            neg[i] = -a[i];
        }
        EXPECT_EQ(spearman(neg, b), -spearman(a, b));
    }
}

TEST(Spearman, JointPermutationInvariance) {
    std::mt19937_64 gen(19);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> a(25), b(25);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = u(gen);
        b[i] = u(gen);
    }
    const double base = spearman(a, b);
    std::vector<std::size_t> idx(a.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int trial = 0; trial < 50; ++trial) {
        std::shuffle(idx.begin(), idx.end(), gen);
        std::vector<double> pa(a.size()), pb(b.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            pa[i] = a[idx[i]];
            pb[i] = b[idx[i]];
        }
        EXPECT_NEAR(spearman(pa, pb), base, 1e-12);
    }
}

TEST(Spearman, MonotoneTransformInvariance) {
    std::mt19937_64 gen(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto warp = [](double x) { return std::exp(3.0 * x) + x; };
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + gen() % 30;
        std::vector<double> a(n), b(n), wa(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = u(gen);
            b[i] = u(gen);
            wa[i] = warp(a[i]);
        }
        EXPECT_EQ(spearman(wa, b), spearman(a, b));
    }
}

TEST(SpearmanPValue, PerfectCorrelationExactPath) {
    // only the identity and the reversal reach |r| = 1 among the 8! rankings
    EXPECT_NEAR(spearman_p_value(1.0, 8), 2.0 / 40320.0, 1e-18);
    EXPECT_NEAR(spearman_p_value(-1.0, 8), 2.0 / 40320.0, 1e-18);
}

TEST(SpearmanPValue, ZeroStatistic) {
    EXPECT_EQ(spearman_p_value(0.0, 100), 1.0);
    EXPECT_EQ(spearman_p_value(0.0, 7), 1.0);
}

TEST(SpearmanPValue, ExactEnumerationN4) {
    // frozen from the direct enumeration oracle: 10 of 24 permutations
    const double expected = oracles::permutation_p_value(0.6, 4);
    EXPECT_NEAR(expected, 10.0 / 24.0, 1e-15);
    EXPECT_NEAR(spearman_p_value(0.6, 4), expected, 1e-15);
}

TEST(SpearmanPValue, ExactMatchesEnumerationOracle) {
    for (std::size_t n = 4; n <= 7; ++n) {
        for (double r : {0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0}) {
            EXPECT_NEAR(spearman_p_value(r, n), oracles::permutation_p_value(r, n),
                        1e-15)
                << "n=" << n << " r=" << r;
        }
    }
}

TEST(SpearmanPValue, TApproximationPath) {
    EXPECT_EQ(spearman_p_value(1.0, 30), 0.0);
    EXPECT_EQ(spearman_p_value(-1.0, 30), 0.0);
    const double p = spearman_p_value(0.5, 30);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 0.01);
    // p decreases with n at fixed r
    EXPECT_LT(spearman_p_value(0.5, 100), p);
}

TEST(SpearmanPValue, Errors) {
    EXPECT_THROW(spearman_p_value(0.5, 3), InsufficientData);
    EXPECT_THROW(spearman_p_value(1.5, 10), InvalidInput);
    EXPECT_THROW(spearman_p_value(std::nan(""), 10), InvalidInput);
}

namespace {

const PairedSeries kOrderedAnchors{{0.1, 0.2, 0.3}, {0.2, 0.4, 0.6}};

}  // namespace

TEST(ScReward, OrderPreservingInsertion) {
    EXPECT_EQ(sc_reward(0.4, 0.8, kOrderedAnchors), 0.0);
}

TEST(ScReward, OrderBreakingInsertion) {
    // ranks after insertion give sum(d^2)=12, r_new=-0.2, reward -1.2
    EXPECT_NEAR(sc_reward(0.05, 0.8, kOrderedAnchors), -1.2, 1e-12);
}

TEST(ScReward, EqualsRecomputeOracle) {
    std::mt19937_64 gen(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> coarse(0, 9);
    for (int trial = 0; trial < 400; ++trial) {
        const std::size_t n = 2 + gen() % 49;
        PairedSeries anchors;
        bool with_ties = trial % 3 == 0;
        for (std::size_t i = 0; i < n; ++i) {
            anchors.confidences.push_back(with_ties ? coarse(gen) / 9.0 : u(gen));
            anchors.surrogates.push_back(with_ties ? coarse(gen) / 9.0 : u(gen));
        }
        const double c = with_ties ? coarse(gen) / 9.0 : u(gen);
        const double k = with_ties ? coarse(gen) / 9.0 : u(gen);
        try {
            const double got = sc_reward(c, k, anchors);
            auto ce = anchors.confidences;
            auto ke = anchors.surrogates;
            ce.push_back(c);
            ke.push_back(k);
            const double expect = oracles::spearman(ce, ke) -
                                  oracles::spearman(anchors.confidences, anchors.surrogates);
            EXPECT_NEAR(got, expect, 1e-12);
        } catch (const DegenerateSeries&) {
        }
    }
}

TEST(NrdReward, OrderPreservingInsertion) {
    EXPECT_EQ(nrd_reward(0.4, 0.8, kOrderedAnchors), 0.0);
}

TEST(NrdReward, OrderBreakingInsertion) {
    // candidate ranks 1st among confidences, 4th among surrogates
    EXPECT_EQ(nrd_reward(0.05, 0.8, kOrderedAnchors), -3.0);
}

TEST(NrdReward, TieAwareRanks) {
    // with a surrogate tie at 0.5 the candidate takes rank 1.5 on that side
    const PairedSeries tied{{0.2, 0.3}, {0.5, 0.6}};
    EXPECT_EQ(nrd_reward(0.25, 0.5, tied), -0.5);
    // without the tie both ranks are 2 and the reward is zero
    const PairedSeries untied{{0.2, 0.3}, {0.4, 0.6}};
    EXPECT_EQ(nrd_reward(0.25, 0.5, untied), 0.0);
}

TEST(NrdReward, NeverPositive) {
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + gen() % 30;
        PairedSeries anchors;
        for (std::size_t i = 0; i < n; ++i) {
            anchors.confidences.push_back(u(gen));
            anchors.surrogates.push_back(u(gen));
        }
        EXPECT_LE(nrd_reward(u(gen), u(gen), anchors), 0.0);
    }
}

TEST(Rewards, MonotoneTransformKeepsScSignAndNrd) {
    std::mt19937_64 gen(37);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto warp = [](double x) { return x * x * x + 2.0 * x; };
    for (int trial = 0; trial < 100; ++trial) {
        PairedSeries anchors;
        const std::size_t n = 3 + gen() % 20;
        for (std::size_t i = 0; i < n; ++i) {
            anchors.confidences.push_back(u(gen));
            anchors.surrogates.push_back(u(gen));
        }
        const double c = u(gen);
        const double k = u(gen);
        PairedSeries warped{{}, anchors.surrogates};
        for (double x : anchors.confidences) warped.confidences.push_back(warp(x));
        const double sc0 = sc_reward(c, k, anchors);
        const double sc1 = sc_reward(warp(c), k, warped);
        EXPECT_NEAR(sc0, sc1, 1e-12);  // ranks unchanged, so the value is too
        EXPECT_EQ(nrd_reward(c, k, anchors), nrd_reward(warp(c), k, warped));
    }
}

// Committed discrimination instance: both candidates have equal NRD reward
// while their SC rewards carry opposite signs, because one candidate fits the
// global monotone trend of the anchors and the other disrupts it.
TEST(Rewards, GlobalVersusLocalSeparationFixture) {
    const PairedSeries anchors{{0.75, 1.0, 0.4, 0.05, 0.9},
                               {0.3, 0.9, 0.85, 0.25, 0.65}};
    EXPECT_NEAR(spearman(anchors), 0.7, 1e-15);

    const double kappa = 0.3;
    const double sc_a = sc_reward(0.25, kappa, anchors);
    const double sc_b = sc_reward(0.5, kappa, anchors);
    const double nrd_a = nrd_reward(0.25, kappa, anchors);
    const double nrd_b = nrd_reward(0.5, kappa, anchors);

    EXPECT_EQ(nrd_a, nrd_b);
    EXPECT_EQ(nrd_a, -0.5);
    EXPECT_GT(sc_a, 0.0);
    EXPECT_LT(sc_b, 0.0);
    EXPECT_NEAR(sc_a, 0.08269089813080543, 1e-12);
    EXPECT_NEAR(sc_b, -0.06225186078230671, 1e-12);

    // the recompute oracle agrees on both rewards
    auto recompute = [&](double c) {
        auto ce = anchors.confidences;
        auto ke = anchors.surrogates;
        ce.push_back(c);
        ke.push_back(kappa);
        return oracles::spearman(ce, ke) -
               oracles::spearman(anchors.confidences, anchors.surrogates);
    };
    EXPECT_NEAR(sc_a, recompute(0.25), 1e-12);
    EXPECT_NEAR(sc_b, recompute(0.5), 1e-12);
}
