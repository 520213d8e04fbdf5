#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "confrank/errors.hpp"

// Exact rank statistics: fractional ranking with ties, Spearman correlation,
// its two-sided p-value, and the two candidate rewards (SC marginal
// contribution and NRD).

namespace confrank::rank_stats {

// The paired anchor lists (C, K): verbalized confidences alongside surrogate
// values. Both lists must have identical length when used for correlation.
struct PairedSeries {
    std::vector<double> confidences;
    std::vector<double> surrogates;

    std::size_t size() const { return confidences.size(); }
};

// Fractional average ranks, 1-based: tied values share the arithmetic mean of
// the positions they occupy, so sum(ranks) == n(n+1)/2 exactly.
inline std::vector<double> rank(std::span<const double> values) {
    if (values.empty()) throw InvalidInput("rank: empty input");
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidInput("rank: non-finite value");
    }
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });

    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        // positions i+1 .. j share the mean rank
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

// Spearman correlation: Pearson correlation of the two fractional-rank
// vectors. The mean rank is (n+1)/2 exactly, so identical orderings yield
// exactly 1.0 and reversed orderings exactly -1.0 (cov and the variances are
// bitwise equal up to sign).
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidInput("spearman: length mismatch");
    if (a.size() < 2) throw InsufficientData("spearman: need n >= 2");

    const std::vector<double> ra = rank(a);
    const std::vector<double> rb = rank(b);
    const double mu = 0.5 * static_cast<double>(a.size() + 1);

    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double dx = ra[i] - mu;
        const double dy = rb[i] - mu;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if (var_a == 0.0 || var_b == 0.0) {
        throw DegenerateSeries("spearman: zero rank variance");
    }
    return cov / std::sqrt(var_a * var_b);
}

inline double spearman(const PairedSeries& s) {
    if (s.confidences.size() != s.surrogates.size()) {
        throw InvalidInput("spearman: paired lists differ in length");
    }
    return spearman(std::span<const double>(s.confidences),
                    std::span<const double>(s.surrogates));
}

namespace detail {

// Histograms of sum(d^2) over all permutations of {1..n} against the
// identity, for n = 2..10. Built once; drives the exact permutation test.
inline const std::vector<std::uint64_t>& sum_d2_histogram(std::size_t n) {
    static const std::array<std::vector<std::uint64_t>, 11> table = [] {
        std::array<std::vector<std::uint64_t>, 11> t;
        for (std::size_t m = 2; m <= 10; ++m) {
            const std::size_t max_d2 = m * (m * m - 1) / 3;
            std::vector<std::uint64_t> hist(max_d2 + 1, 0);
            std::vector<int> perm(m);
            std::iota(perm.begin(), perm.end(), 0);
            do {
                std::size_t d2 = 0;
                for (std::size_t i = 0; i < m; ++i) {
                    const int d = perm[i] - static_cast<int>(i);
                    d2 += static_cast<std::size_t>(d * d);
                }
                ++hist[d2];
            } while (std::next_permutation(perm.begin(), perm.end()));
            t[m] = std::move(hist);
        }
        return t;
    }();
    return table[n];
}

}  // namespace detail

// Two-sided p-value of a Spearman statistic r at sample size n. Exact
// permutation enumeration for n <= 10; the t-approximation
// t = r * sqrt((n-2)/(1-r^2)) with n-2 degrees of freedom otherwise.
inline double spearman_p_value(double r, std::size_t n) {
    if (n < 4) throw InsufficientData("spearman_p_value: need n >= 4");
    if (!std::isfinite(r) || std::abs(r) > 1.0 + 1e-9) {
        throw InvalidInput("spearman_p_value: |r| must be <= 1");
    }
    r = std::clamp(r, -1.0, 1.0);

    if (n <= 10) {
        const auto& hist = detail::sum_d2_histogram(n);
        const double denom = static_cast<double>(n * (n * n - 1));
        std::uint64_t hits = 0, total = 0;
        for (std::size_t d2 = 0; d2 < hist.size(); ++d2) {
            if (hist[d2] == 0) continue;
            total += hist[d2];
            const double rp = 1.0 - 6.0 * static_cast<double>(d2) / denom;
            if (std::abs(rp) >= std::abs(r) - 1e-12) hits += hist[d2];
        }
        return static_cast<double>(hits) / static_cast<double>(total);
    }

    const double one_minus_r2 = 1.0 - r * r;
    if (one_minus_r2 <= 0.0) return 0.0;
    const double t = std::abs(r) * std::sqrt(static_cast<double>(n - 2) / one_minus_r2);
    boost::math::students_t_distribution<double> dist(static_cast<double>(n - 2));
    const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
    return std::clamp(p, 0.0, 1.0);
}

// SC reward: marginal change in Spearman correlation from appending the
// candidate pair (c, kappa) to the anchor lists.
inline double sc_reward(double c, double kappa, const PairedSeries& anchors) {
    const double base = spearman(anchors);
    std::vector<double> ce(anchors.confidences);
    std::vector<double> ke(anchors.surrogates);
    ce.push_back(c);
    ke.push_back(kappa);
    return spearman(std::span<const double>(ce), std::span<const double>(ke)) - base;
}

// NRD reward: negated absolute difference between the candidate's fractional
// rank in the enlarged confidence list and in the enlarged surrogate list.
// Always <= 0.
inline double nrd_reward(double c, double kappa, const PairedSeries& anchors) {
    (void)spearman(anchors);  // same validation and error contract as sc_reward
    std::vector<double> ce(anchors.confidences);
    std::vector<double> ke(anchors.surrogates);
    ce.push_back(c);
    ke.push_back(kappa);
    const double rc = rank(ce).back();
    const double rk = rank(ke).back();
    return -std::abs(rc - rk);
}

}  // namespace confrank::rank_stats
