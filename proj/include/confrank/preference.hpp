#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confrank/errors.hpp"
#include "confrank/rank_stats.hpp"
#include "confrank/surrogate.hpp"

// Reference-set management, candidate scoring with the SC/NRD rewards,
// preferred/rejected pair extraction, and the DPO objective with analytic
// gradients.

namespace confrank::preference {

enum class RewardKind { SC, NRD };

enum class ReferenceSource { sft_greedy, manual };

// The paired (confidence, surrogate) anchors a candidate is scored against.
// prompt_ids tracks provenance so a candidate's own prompt can be excluded.
struct ReferenceSet {
    rank_stats::PairedSeries anchors;
    std::vector<std::string> prompt_ids;
    std::size_t capacity = 0;
    int refresh_epoch = 0;
    ReferenceSource source = ReferenceSource::sft_greedy;
};

struct ConfidenceCandidate {
    std::string prompt_id;
    int sample_index = 0;
    double value = 0.0;  // parsed confidence in [0,1]
    std::string raw_text;
    double reward = 0.0;  // filled by score_candidates
    bool valid = true;    // false when the raw text failed to parse
};

struct PreferencePair {
    std::string prompt_id;
    std::string context;  // prompt and realized answer under the confidence template
    ConfidenceCandidate chosen;
    ConfidenceCandidate rejected;
    double reward_gap = 0.0;  // strictly positive
};

struct DpoBatchPoint {
    double logp_theta_chosen = 0.0;
    double logp_theta_rejected = 0.0;
    double logp_ref_chosen = 0.0;
    double logp_ref_rejected = 0.0;
    double beta = 0.1;
};

namespace detail {

inline rank_stats::PairedSeries anchors_excluding(const ReferenceSet& refs,
                                                  const std::string& prompt_id) {
    rank_stats::PairedSeries out;
    const auto n = refs.anchors.size();
    out.confidences.reserve(n);
    out.surrogates.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < refs.prompt_ids.size() && refs.prompt_ids[i] == prompt_id) continue;
        out.confidences.push_back(refs.anchors.confidences[i]);
        out.surrogates.push_back(refs.anchors.surrogates[i]);
    }
    return out;
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

// Score each candidate against the reference set with the chosen reward.
// A candidate's own prompt is removed from the anchors before the marginal
// insertion; input order is preserved.
inline std::vector<ConfidenceCandidate> score_candidates(
    std::vector<ConfidenceCandidate> cands, double kappa, const ReferenceSet& refs,
    RewardKind kind) {
    if (!std::isfinite(kappa) || kappa < 0.0 || kappa > 1.0) {
        throw InvalidInput("score_candidates: kappa outside [0,1]");
    }
    if (refs.anchors.confidences.size() != refs.anchors.surrogates.size()) {
        throw InvalidInput("score_candidates: anchor lists differ in length");
    }
    // all candidates for one call share a prompt, so cache per distinct id
    std::map<std::string, rank_stats::PairedSeries> excluded;
    for (auto& cand : cands) {
        auto it = excluded.find(cand.prompt_id);
        if (it == excluded.end()) {
            it = excluded.emplace(cand.prompt_id,
                                  detail::anchors_excluding(refs, cand.prompt_id))
                     .first;
        }
        const auto& anchors = it->second;
        if (anchors.size() < 2) {
            throw InsufficientAnchors(
                "score_candidates: fewer than 2 anchors after self-exclusion");
        }
        cand.reward = kind == RewardKind::SC
                          ? rank_stats::sc_reward(cand.value, kappa, anchors)
                          : rank_stats::nrd_reward(cand.value, kappa, anchors);
    }
    return cands;
}

// Chosen is the highest reward, rejected the lowest; ties break toward the
// lower sample index. Returns nullopt (skip) when all rewards are equal.
inline std::optional<PreferencePair> extract_pair(
    std::span<const ConfidenceCandidate> scored, std::string context = {}) {
    if (scored.size() < 2) {
        throw InsufficientCandidates("extract_pair: need at least 2 candidates");
    }
    const ConfidenceCandidate* hi = &scored[0];
    const ConfidenceCandidate* lo = &scored[0];
    for (const auto& cand : scored) {
        if (cand.reward > hi->reward ||
            (cand.reward == hi->reward && cand.sample_index < hi->sample_index)) {
            hi = &cand;
        }
        if (cand.reward < lo->reward ||
            (cand.reward == lo->reward && cand.sample_index < lo->sample_index)) {
            lo = &cand;
        }
    }
    if (!(hi->reward > lo->reward)) return std::nullopt;
    PreferencePair pair;
    pair.prompt_id = hi->prompt_id;
    pair.context = std::move(context);
    pair.chosen = *hi;
    pair.rejected = *lo;
    pair.reward_gap = hi->reward - lo->reward;
    return pair;
}

namespace detail {

inline double dpo_delta(const DpoBatchPoint& point) {
    for (double v : {point.logp_theta_chosen, point.logp_theta_rejected,
                     point.logp_ref_chosen, point.logp_ref_rejected, point.beta}) {
        if (!std::isfinite(v)) throw InvalidInput("dpo: non-finite input");
    }
    if (point.beta <= 0.0) throw InvalidInput("dpo: beta must be positive");
    return (point.logp_theta_chosen - point.logp_theta_rejected) -
           (point.logp_ref_chosen - point.logp_ref_rejected);
}

}  // namespace detail

// -log sigmoid(beta * delta), evaluated in the log1p-exp form so it stays
// finite for |beta*delta| up to ~700.
inline double dpo_loss(const DpoBatchPoint& point) {
    const double x = point.beta * detail::dpo_delta(point);
    if (x >= 0.0) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

// Partials of dpo_loss with respect to the policy log-probabilities of the
// chosen and rejected responses: (-beta*(1-sig), +beta*(1-sig)).
inline std::pair<double, double> dpo_grad(const DpoBatchPoint& point) {
    const double x = point.beta * detail::dpo_delta(point);
    const double g = point.beta * (1.0 - detail::sigmoid(x));
    return {-g, g};
}

// Rebuild the reference set from the policy's greedy confidences on the
// anchor split: (greedy confidence, kappa_s) pairs for the first `capacity`
// anchor prompts in dataset order.
inline ReferenceSet refresh_reference_set(
    const std::map<std::string, double>& policy_greedy,
    std::span<const surrogate::SurrogateRecord> anchor_split, std::size_t capacity,
    const ReferenceSet* previous = nullptr) {
    if (capacity < 2) {
        throw InsufficientAnchors("refresh_reference_set: capacity must be >= 2");
    }
    if (anchor_split.size() < 2) {
        throw InsufficientAnchors("refresh_reference_set: fewer than 2 anchor prompts");
    }
    ReferenceSet refs;
    refs.capacity = capacity;
    refs.refresh_epoch = previous == nullptr ? 0 : previous->refresh_epoch + 1;
    refs.source = ReferenceSource::sft_greedy;
    for (const auto& rec : anchor_split) {
        if (refs.anchors.size() >= capacity) break;
        const auto it = policy_greedy.find(rec.prompt_id);
        if (it == policy_greedy.end()) {
            throw InvalidInput("refresh_reference_set: no greedy confidence for prompt '" +
                               rec.prompt_id + "'");
        }
        refs.anchors.confidences.push_back(it->second);
        refs.anchors.surrogates.push_back(rec.kappa_s);
        refs.prompt_ids.push_back(rec.prompt_id);
    }
    return refs;
}

}  // namespace confrank::preference
