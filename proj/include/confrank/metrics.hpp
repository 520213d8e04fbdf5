#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "confrank/errors.hpp"
#include "confrank/rank_stats.hpp"

// Calibration and failure-prediction evaluation: ECE, Spearman correlation,
// risk-coverage curve, AURC, E-AURC, accuracy.

namespace confrank::metrics {

struct EvalInstance {
    double confidence = 0.0;  // in [0,1]
    int correct = 0;          // in {0,1}
    std::string instance_id;
};

struct RiskCoveragePoint {
    double coverage = 0.0;  // i/n for point i
    double risk = 0.0;      // error rate among the i most-confident instances
};

// Points are ordered by strictly increasing coverage; ordering policy is
// confidence descending with ties broken by ascending instance index.
struct RiskCoverageCurve {
    std::vector<RiskCoveragePoint> points;
};

struct EvalReport {
    double ece = 0.0;
    double spearman = 0.0;
    double spearman_p = 1.0;
    double aurc = 0.0;
    double e_aurc = 0.0;
    double accuracy = 0.0;
    std::size_t n = 0;
    std::size_t bin_count = 0;
    bool spearman_defined = true;
    std::string spearman_p_method;  // "exact-permutation", "t-approximation", "undefined"
    RiskCoverageCurve curve;
};

namespace detail {

inline void require_instances(std::span<const EvalInstance> instances) {
    if (instances.empty()) throw InsufficientData("metrics: empty instance list");
    for (const auto& inst : instances) {
        if (!std::isfinite(inst.confidence) || inst.confidence < 0.0 ||
            inst.confidence > 1.0) {
            throw InvalidInput("metrics: confidence outside [0,1]");
        }
        if (inst.correct != 0 && inst.correct != 1) {
            throw InvalidInput("metrics: correctness must be 0 or 1");
        }
    }
}

// Bin index for equal-width bins over [0,1] with intervals (lo, hi], the
// first bin closed at 0.
inline std::size_t bin_index(double confidence, std::size_t bins) {
    const double scaled = confidence * static_cast<double>(bins);
    const double up = std::ceil(scaled);
    long idx = static_cast<long>(up) - 1;
    idx = std::clamp(idx, 0L, static_cast<long>(bins) - 1);
    return static_cast<std::size_t>(idx);
}

}  // namespace detail

// Expected calibration error: bin-weighted mean absolute gap between mean
// confidence and empirical accuracy over nonempty bins.
inline double ece(std::span<const EvalInstance> instances, std::size_t bins) {
    detail::require_instances(instances);
    if (bins < 1) throw InvalidInput("ece: bins must be >= 1");

    std::vector<double> conf_sum(bins, 0.0), hit_sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (const auto& inst : instances) {
        const std::size_t b = detail::bin_index(inst.confidence, bins);
        conf_sum[b] += inst.confidence;
        hit_sum[b] += inst.correct;
        ++count[b];
    }
    double total = 0.0;
    const double n = static_cast<double>(instances.size());
    for (std::size_t b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const double nb = static_cast<double>(count[b]);
        total += (nb / n) * std::abs(conf_sum[b] / nb - hit_sum[b] / nb);
    }
    return total;
}

// Sort by confidence descending, ties broken by ascending instance index;
// point i is (i/n, errors among first i / i).
inline RiskCoverageCurve risk_coverage(std::span<const EvalInstance> instances) {
    detail::require_instances(instances);
    const std::size_t n = instances.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return instances[i].confidence > instances[j].confidence;
    });

    RiskCoverageCurve curve;
    curve.points.reserve(n);
    std::size_t errors = 0;
    for (std::size_t i = 0; i < n; ++i) {
        errors += 1 - instances[order[i]].correct;
        curve.points.push_back(
            {static_cast<double>(i + 1) / static_cast<double>(n),
             static_cast<double>(errors) / static_cast<double>(i + 1)});
    }
    return curve;
}

// Rectangle rule over the uniform coverage grid: the mean of the risks.
inline double aurc(const RiskCoverageCurve& curve) {
    if (curve.points.empty()) throw InsufficientData("aurc: empty curve");
    double sum = 0.0;
    for (const auto& p : curve.points) sum += p.risk;
    return sum / static_cast<double>(curve.points.size());
}

inline double aurc(std::span<const EvalInstance> instances) {
    return aurc(risk_coverage(instances));
}

namespace detail {

// AURC of the oracle ordering that places every correct instance first. It
// depends only on n and the error count.
inline double oracle_aurc(std::size_t n, std::size_t errors) {
    const std::size_t correct = n - errors;
    double sum = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const std::size_t seen_errors = i > correct ? i - correct : 0;
        sum += static_cast<double>(seen_errors) / static_cast<double>(i);
    }
    return sum / static_cast<double>(n);
}

}  // namespace detail

// Excess AURC over the accuracy-matched oracle ordering; >= 0 up to 1e-12.
inline double e_aurc(std::span<const EvalInstance> instances) {
    detail::require_instances(instances);
    std::size_t errors = 0;
    for (const auto& inst : instances) errors += 1 - inst.correct;
    return aurc(instances) - detail::oracle_aurc(instances.size(), errors);
}

inline EvalReport evaluate(std::span<const EvalInstance> instances,
                           std::size_t bins) {
    detail::require_instances(instances);
    if (instances.size() < 4) {
        throw InsufficientData("evaluate: need n >= 4 for the p-value path");
    }

    EvalReport report;
    report.n = instances.size();
    report.bin_count = bins;
    report.ece = ece(instances, bins);
    report.curve = risk_coverage(instances);
    report.aurc = aurc(report.curve);

    std::size_t errors = 0;
    std::vector<double> confs, hits;
    confs.reserve(instances.size());
    hits.reserve(instances.size());
    for (const auto& inst : instances) {
        errors += 1 - inst.correct;
        confs.push_back(inst.confidence);
        hits.push_back(static_cast<double>(inst.correct));
    }
    report.e_aurc = report.aurc - detail::oracle_aurc(report.n, errors);
    report.accuracy =
        static_cast<double>(report.n - errors) / static_cast<double>(report.n);

    try {
        report.spearman = rank_stats::spearman(confs, hits);
        report.spearman_p = rank_stats::spearman_p_value(report.spearman, report.n);
        report.spearman_p_method =
            report.n <= 10 ? "exact-permutation" : "t-approximation";
    } catch (const DegenerateSeries&) {
        // all-correct/all-incorrect labels (or constant confidences): the
        // statistic is undefined but the remaining fields stay valid
        report.spearman_defined = false;
        report.spearman = std::nan("");
        report.spearman_p = std::nan("");
        report.spearman_p_method = "undefined";
    }
    return report;
}

}  // namespace confrank::metrics
