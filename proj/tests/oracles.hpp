#pragma once

// Independent reference implementations used only by tests. Deliberately
// written along different routes than the library: counting ranks in O(n^2),
// Pearson with accumulated means, direct permutation enumeration, and
// re-sorting risk-coverage selections per coverage level.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace oracles {

// Fractional ranks by pairwise counting: rank_i = #less + (#equal + 1)/2.
inline std::vector<double> count_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t less = 0, equal = 0;
        for (double y : v) {
            if (y < v[i]) ++less;
            if (y == v[i]) ++equal;
        }
        r[i] = static_cast<double>(less) + 0.5 * static_cast<double>(equal + 1);
    }
    return r;
}

// Pearson correlation with explicitly accumulated means.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
    }
    return cov / std::sqrt(vx * vy);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(count_ranks(a), count_ranks(b));
}

// Tie-free closed form 1 - 6*sum(d^2) / (n(n^2-1)) over two rank vectors.
inline double spearman_closed_form(const std::vector<double>& a,
                                   const std::vector<double>& b) {
    const auto ra = count_ranks(a);
    const auto rb = count_ranks(b);
    double d2 = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    }
    const double n = static_cast<double>(ra.size());
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

// Two-sided exact permutation p-value by direct enumeration.
inline double permutation_p_value(double r, std::size_t n) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 1);
    const double denom = static_cast<double>(n * (n * n - 1));
    std::uint64_t hits = 0, total = 0;
    do {
        double d2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = perm[i] - static_cast<double>(i + 1);
            d2 += d * d;
        }
        const double rp = 1.0 - 6.0 * d2 / denom;
        ++total;
        if (std::abs(rp) >= std::abs(r) - 1e-12) ++hits;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(hits) / static_cast<double>(total);
}

// Risk at each coverage level by independently re-selecting the k most
// confident instances (confidence descending, index ascending) per level.
inline std::vector<double> brute_risks(const std::vector<double>& conf,
                                       const std::vector<int>& correct) {
    const std::size_t n = conf.size();
    std::vector<double> risks;
    for (std::size_t k = 1; k <= n; ++k) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (conf[a] != conf[b]) return conf[a] > conf[b];
            return a < b;
        });
        std::size_t errors = 0;
        for (std::size_t i = 0; i < k; ++i) errors += 1 - correct[idx[i]];
        risks.push_back(static_cast<double>(errors) / static_cast<double>(k));
    }
    return risks;
}

inline double brute_aurc(const std::vector<double>& conf,
                         const std::vector<int>& correct) {
    const auto risks = brute_risks(conf, correct);
    double sum = 0.0;
    for (double r : risks) sum += r;
    return sum / static_cast<double>(risks.size());
}

// Oracle AURC via an explicit correct-first ordering.
inline double brute_oracle_aurc(const std::vector<int>& correct) {
    const std::size_t n = correct.size();
    std::vector<int> sorted = correct;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](int a, int b) { return a > b; });
    double sum = 0.0;
    std::size_t errors = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        errors += 1 - sorted[i - 1];
        sum += static_cast<double>(errors) / static_cast<double>(i);
    }
    return sum / static_cast<double>(n);
}

inline double brute_e_aurc(const std::vector<double>& conf,
                           const std::vector<int>& correct) {
    return brute_aurc(conf, correct) - brute_oracle_aurc(correct);
}

}  // namespace oracles
