#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "confrank/errors.hpp"
#include "confrank/metrics.hpp"
#include "confrank/preference.hpp"
#include "confrank/rank_stats.hpp"
#include "confrank/rng.hpp"
#include "confrank/surrogate.hpp"

// Synthetic answer policies with known prompt-level reliability, a tiny
// trainable confidence policy over a confidence grid, and experiments that
// exercise the rank-alignment theory end to end at desk scale.

namespace confrank::sim {

// A prompt whose answer model is Bernoulli(eta). The feature is the noisy
// observation of eta the confidence policy gets to see.
struct SyntheticTask {
    std::string prompt_id;
    double eta = 0.5;      // strictly inside (0,1)
    double feature = 0.5;  // clip(eta + N(0, sigma_obs^2), 0, 1)
};

// Categorical policy over the 11 confidence levels {0.0, 0.1, ..., 1.0},
// with one logit row per feature bin.
struct ToyConfidencePolicy {
    static constexpr int kLevels = 11;
    int feature_bins = 20;
    std::vector<double> logits;  // feature_bins x kLevels, row-major

    static double level_value(int j) { return static_cast<double>(j) / 10.0; }

    void reset(int bins) {
        feature_bins = bins;
        logits.assign(static_cast<std::size_t>(bins) * kLevels, 0.0);
    }

    int bin_of(double feature) const {
        const int b = static_cast<int>(feature * feature_bins);
        return std::clamp(b, 0, feature_bins - 1);
    }

    std::span<const double> row(int bin) const {
        return {logits.data() + static_cast<std::size_t>(bin) * kLevels,
                static_cast<std::size_t>(kLevels)};
    }

    std::vector<double> log_softmax_row(int bin) const {
        const auto r = row(bin);
        const double m = *std::max_element(r.begin(), r.end());
        double z = 0.0;
        for (double v : r) z += std::exp(v - m);
        const double log_z = m + std::log(z);
        std::vector<double> out(r.begin(), r.end());
        for (double& v : out) v -= log_z;
        return out;
    }

    std::vector<double> softmax_row(int bin) const {
        auto out = log_softmax_row(bin);
        for (double& v : out) v = std::exp(v);
        return out;
    }

    int greedy_level(int bin) const {
        const auto r = row(bin);
        return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }

    double greedy_confidence(double feature) const {
        return level_value(greedy_level(bin_of(feature)));
    }

    // every per-bin distribution must sum to one within 1e-12
    void check_normalization() const {
        for (int b = 0; b < feature_bins; ++b) {
            double sum = 0.0;
            for (double p : softmax_row(b)) sum += p;
            if (std::abs(sum - 1.0) > 1e-12) {
                throw InvalidInput("policy row " + std::to_string(b) +
                                   " is not normalized");
            }
        }
    }
};

struct MonotoneTransform {
    enum class Kind { affine_pos, cube_plus_linear, logit_like };
    Kind kind = Kind::affine_pos;
    double scale = 1.0;   // must be > 0
    double offset = 0.0;  // affine_pos only

    double operator()(double x) const {
        switch (kind) {
            case Kind::affine_pos:
                return scale * x + offset;
            case Kind::cube_plus_linear:
                return x * x * x + scale * x;
            case Kind::logit_like:
                return scale * std::log(x / (1.0 - x));
        }
        return x;
    }

    bool strictly_increasing_on_grid() const {
        double prev = (*this)(1e-4);
        for (int i = 2; i <= 1000; ++i) {
            const double x = 1e-4 + (1.0 - 2e-4) * (i - 1) / 999.0;
            const double y = (*this)(x);
            if (!(y > prev)) return false;
            prev = y;
        }
        return true;
    }

    std::string name() const {
        switch (kind) {
            case Kind::affine_pos: return "affine_pos";
            case Kind::cube_plus_linear: return "cube_plus_linear";
            case Kind::logit_like: return "logit_like";
        }
        return "unknown";
    }
};

enum class EtaLaw { uniform, beta };

inline std::vector<SyntheticTask> generate_tasks(std::size_t n, EtaLaw law,
                                                 double beta_a, double beta_b,
                                                 double sigma_obs,
                                                 std::uint64_t seed) {
    if (n < 1) throw InvalidInput("generate_tasks: n must be >= 1");
    if (law == EtaLaw::beta && (beta_a <= 0.0 || beta_b <= 0.0)) {
        throw InvalidInput("generate_tasks: beta parameters must be positive");
    }
    if (sigma_obs < 0.0) throw InvalidInput("generate_tasks: sigma_obs must be >= 0");

    rng::Rng gen(seed);
    std::vector<SyntheticTask> tasks;
    tasks.reserve(n);
    constexpr double eps = 1e-9;
    for (std::size_t i = 0; i < n; ++i) {
        double eta = law == EtaLaw::uniform ? gen.uniform() : gen.beta(beta_a, beta_b);
        eta = std::clamp(eta, eps, 1.0 - eps);  // keep strictly inside (0,1)
        const double feature =
            std::clamp(eta + gen.normal(0.0, sigma_obs), 0.0, 1.0);
        tasks.push_back({"t" + std::to_string(i), eta, feature});
    }
    return tasks;
}

// K i.i.d. Bernoulli(eta) draws, deterministic in (task id, K, seed).
inline std::vector<int> sample_correctness(const SyntheticTask& task, int ensemble_size,
                                           std::uint64_t seed) {
    if (ensemble_size < 1) throw InvalidInput("sample_correctness: K must be >= 1");
    rng::Rng gen(rng::derive_seed(seed, rng::fnv1a(task.prompt_id)));
    std::vector<int> bits(static_cast<std::size_t>(ensemble_size));
    for (auto& b : bits) b = gen.bernoulli(task.eta);
    return bits;
}

struct RankOptimumReport {
    std::string transform;
    std::size_t n = 0;
    int attempts = 1;  // regenerations needed to obtain distinct eta values
    double spearman = 0.0;
    double spearman_negated = 0.0;
    bool pass = false;
};

// Sets S = T(eta) for a strictly increasing T and checks that Spearman
// correlation equals exactly 1.0 (and exactly -1.0 under negation).
inline RankOptimumReport verify_rank_optimum(std::size_t n, const MonotoneTransform& transform,
                                     std::uint64_t seed) {
    if (n < 100) throw InvalidInput("verify_rank_optimum: n must be >= 100");
    if (!transform.strictly_increasing_on_grid()) {
        throw InvalidInput("verify_rank_optimum: transform is not strictly increasing");
    }

    std::vector<double> eta;
    int attempts = 0;
    for (;;) {
        ++attempts;
        const auto tasks = generate_tasks(n, EtaLaw::uniform, 0, 0, 0.0, seed + attempts - 1);
        eta.clear();
        for (const auto& t : tasks) eta.push_back(t.eta);
        std::vector<double> sorted = eta;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) break;
        if (attempts > 16) throw InvalidInput("verify_rank_optimum: duplicate eta values persist");
    }

    std::vector<double> score(eta.size()), negated(eta.size());
    for (std::size_t i = 0; i < eta.size(); ++i) {
        score[i] = transform(eta[i]);
        negated[i] = -score[i];
    }

    RankOptimumReport report;
    report.transform = transform.name();
    report.n = n;
    report.attempts = attempts;
    report.spearman = rank_stats::spearman(score, eta);
    report.spearman_negated = rank_stats::spearman(negated, eta);
    report.pass = report.spearman == 1.0 && report.spearman_negated == -1.0;
    return report;
}

struct ConsistencyReport {
    std::vector<int> ensemble_sizes;
    std::vector<double> gaps;  // |spearman(S, kappa_K) - spearman(S, eta)| per K
    double spearman_vs_eta = 0.0;
    int inversions = 0;  // consecutive gap increases
    bool pass = false;
};

// Fixed score S = T(eta) + small noise; the Spearman gap against the
// surrogate must shrink as the ensemble grows.
inline ConsistencyReport verify_consistency(std::size_t n, std::span<const int> k_list,
                                            std::uint64_t seed) {
    if (n < 1000) throw InvalidInput("verify_consistency: n must be >= 1000");
    if (k_list.empty()) throw InvalidInput("verify_consistency: empty K list");

    const auto tasks = generate_tasks(n, EtaLaw::uniform, 0, 0, 0.0, rng::derive_seed(seed, 1));
    rng::Rng noise(rng::derive_seed(seed, 2));
    const MonotoneTransform t{MonotoneTransform::Kind::affine_pos, 2.0, 0.5};

    std::vector<double> eta(n), score(n);
    for (std::size_t i = 0; i < n; ++i) {
        eta[i] = tasks[i].eta;
        score[i] = t(eta[i]) + noise.normal(0.0, 0.1);
    }

    ConsistencyReport report;
    report.spearman_vs_eta = rank_stats::spearman(score, eta);
    for (int k : k_list) {
        std::vector<double> kappa(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto bits = sample_correctness(tasks[i], k, rng::derive_seed(seed, 100 + k));
            double sum = 0.0;
            for (int b : bits) sum += b;
            kappa[i] = sum / static_cast<double>(k);
        }
        const double rho = rank_stats::spearman(score, kappa);
        report.gaps.push_back(std::abs(rho - report.spearman_vs_eta));
        report.ensemble_sizes.push_back(k);
    }
    for (std::size_t i = 1; i < report.gaps.size(); ++i) {
        if (report.gaps[i] > report.gaps[i - 1]) ++report.inversions;
    }
    report.pass = report.gaps.back() < 0.05 && report.gaps.back() < report.gaps.front() &&
                  report.inversions <= 1;
    return report;
}

struct TrainingConfig {
    std::size_t n_train = 2000;
    std::size_t n_anchor = 300;
    std::size_t n_eval = 1000;
    int ensemble_size = 8;
    int candidates_per_prompt = 8;
    double beta = 0.1;
    int rounds = 30;
    double learning_rate = 100.0;
    double warm_start_rho_target = 0.3;
    preference::RewardKind reward_kind = preference::RewardKind::SC;
    std::uint64_t seed = 1;
    double sigma_obs = 0.15;
    int feature_bins = 20;
    std::size_t anchor_capacity = 256;
    std::size_t ece_bins = 10;
};

struct RoundRecord {
    int round = 0;
    double spearman_vs_eta = 0.0;
    double spearman_vs_kappa = 0.0;
    double ece = 0.0;
    double aurc = 0.0;
    double e_aurc = 0.0;
    double mean_dpo_loss = 0.0;
    std::size_t pair_count = 0;
    bool no_pairs = false;  // NoPairsThisRound marker
};

struct TrainingTrajectory {
    TrainingConfig config;
    double warm_start_rho_vs_kappa = 0.0;  // greedy-vs-kappa on the train split
    double warm_start_noise_scale = 0.0;
    std::vector<RoundRecord> rounds;  // rounds[0] is the warm-start evaluation
};

// One (bin, chosen level, rejected level) preference extracted in a round.
struct LevelPair {
    int bin = 0;
    int chosen_level = 0;
    int rejected_level = 0;
};

// Mean DPO loss of a pair batch under the current policy against a frozen
// reference policy.
inline double dpo_batch_loss(const ToyConfidencePolicy& policy,
                             const ToyConfidencePolicy& reference,
                             std::span<const LevelPair> pairs, double beta) {
    if (pairs.empty()) throw InvalidInput("dpo_batch_loss: empty pair batch");
    double total = 0.0;
    for (const auto& pair : pairs) {
        const auto lp = policy.log_softmax_row(pair.bin);
        const auto lr = reference.log_softmax_row(pair.bin);
        total += preference::dpo_loss({lp[pair.chosen_level], lp[pair.rejected_level],
                                       lr[pair.chosen_level], lr[pair.rejected_level],
                                       beta});
    }
    return total / static_cast<double>(pairs.size());
}

// Analytic gradient of dpo_batch_loss with respect to every policy logit,
// chained through the per-bin log-softmax.
inline std::vector<double> dpo_batch_grad(const ToyConfidencePolicy& policy,
                                          const ToyConfidencePolicy& reference,
                                          std::span<const LevelPair> pairs,
                                          double beta) {
    if (pairs.empty()) throw InvalidInput("dpo_batch_grad: empty pair batch");
    std::vector<double> grad(policy.logits.size(), 0.0);
    for (const auto& pair : pairs) {
        const auto lp = policy.log_softmax_row(pair.bin);
        const auto lr = reference.log_softmax_row(pair.bin);
        const auto probs = policy.softmax_row(pair.bin);
        const auto [g_chosen, g_rejected] = preference::dpo_grad(
            {lp[pair.chosen_level], lp[pair.rejected_level], lr[pair.chosen_level],
             lr[pair.rejected_level], beta});
        double* row = grad.data() +
                      static_cast<std::size_t>(pair.bin) * ToyConfidencePolicy::kLevels;
        for (int j = 0; j < ToyConfidencePolicy::kLevels; ++j) {
            const double d_chosen = (j == pair.chosen_level ? 1.0 : 0.0) - probs[j];
            const double d_rejected = (j == pair.rejected_level ? 1.0 : 0.0) - probs[j];
            row[j] += g_chosen * d_chosen + g_rejected * d_rejected;
        }
    }
    for (double& g : grad) g /= static_cast<double>(pairs.size());
    return grad;
}

namespace detail {

struct Split {
    std::vector<SyntheticTask> tasks;
    std::vector<double> kappa;
    std::vector<int> realized_correct;
    std::vector<surrogate::SurrogateRecord> surrogates;
};

inline Split make_split(std::size_t n, const TrainingConfig& cfg, std::uint64_t stream,
                        const std::string& id_prefix) {
    Split split;
    split.tasks = generate_tasks(n, EtaLaw::uniform, 0, 0, cfg.sigma_obs,
                                 rng::derive_seed(cfg.seed, stream));
    for (auto& task : split.tasks) task.prompt_id = id_prefix + task.prompt_id;
    for (const auto& task : split.tasks) {
        const auto bits =
            sample_correctness(task, cfg.ensemble_size, rng::derive_seed(cfg.seed, stream + 1));
        double sum = 0.0;
        for (int b : bits) sum += b;
        const double kappa = sum / static_cast<double>(cfg.ensemble_size);
        split.kappa.push_back(kappa);
        const int realized = kappa >= 0.5 ? 1 : 0;
        split.realized_correct.push_back(realized);
        split.surrogates.push_back(
            {task.prompt_id, cfg.ensemble_size, kappa, "", realized, 0});
    }
    return split;
}

inline double spearman_or_zero(std::span<const double> a, std::span<const double> b) {
    try {
        return rank_stats::spearman(a, b);
    } catch (const DegenerateSeries&) {
        return 0.0;  // a constant list carries no ordering information
    }
}

// Warm start: per-bin logits pulled toward the bin midpoint (or the
// reflected midpoint for negative targets), perturbed by seeded noise whose
// scale is searched so the greedy policy's Spearman against the training
// kappas lands within +-0.1 of the target.
inline std::pair<ToyConfidencePolicy, double> warm_start_policy(
    const TrainingConfig& cfg, const Split& train, double* achieved_rho) {
    ToyConfidencePolicy policy;
    policy.reset(cfg.feature_bins);

    std::vector<double> base(policy.logits.size());
    for (int b = 0; b < cfg.feature_bins; ++b) {
        const double mid = (b + 0.5) / cfg.feature_bins;
        const double target = cfg.warm_start_rho_target >= 0.0 ? mid : 1.0 - mid;
        for (int j = 0; j < ToyConfidencePolicy::kLevels; ++j) {
            const double d = ToyConfidencePolicy::level_value(j) - target;
            base[static_cast<std::size_t>(b) * ToyConfidencePolicy::kLevels + j] =
                -30.0 * d * d;
        }
    }
    std::vector<int> bins;
    bins.reserve(train.tasks.size());
    for (const auto& task : train.tasks) bins.push_back(policy.bin_of(task.feature));

    // The greedy map is piecewise constant in the noise scale, so rho(scale)
    // moves in plateaus and can step right past the target. Scan scales
    // ascending and fall back to fresh noise streams until one plateau lands
    // within 0.05; keep the global best as a last resort.
    std::vector<double> noise(policy.logits.size());
    std::vector<double> best_logits;
    double best_scale = 0.0;
    double best_rho = 0.0;
    double best_err = 2.0;
    for (int attempt = 0; attempt < 8 && best_err > 0.05; ++attempt) {
        rng::Rng noise_gen(rng::derive_seed(cfg.seed, 7 + 1000 * attempt));
        for (double& v : noise) v = noise_gen.normal();
        for (int step = 0; step <= 400; ++step) {
            const double scale = 0.1 * step;
            for (std::size_t i = 0; i < policy.logits.size(); ++i) {
                policy.logits[i] = base[i] + scale * noise[i];
            }
            std::vector<double> conf(train.tasks.size());
            for (std::size_t i = 0; i < conf.size(); ++i) {
                conf[i] = ToyConfidencePolicy::level_value(policy.greedy_level(bins[i]));
            }
            const double rho = spearman_or_zero(conf, train.kappa);
            const double err = std::abs(rho - cfg.warm_start_rho_target);
            if (err < best_err) {
                best_err = err;
                best_scale = scale;
                best_rho = rho;
                best_logits = policy.logits;
            }
            if (best_err <= 0.05) break;
        }
    }
    policy.logits = best_logits;
    *achieved_rho = best_rho;
    return {policy, best_scale};
}

inline RoundRecord evaluate_policy(const ToyConfidencePolicy& policy, const Split& eval,
                                   const TrainingConfig& cfg, int round) {
    std::vector<double> conf(eval.tasks.size());
    std::vector<double> eta(eval.tasks.size());
    std::vector<metrics::EvalInstance> instances(eval.tasks.size());
    for (std::size_t i = 0; i < eval.tasks.size(); ++i) {
        conf[i] = policy.greedy_confidence(eval.tasks[i].feature);
        eta[i] = eval.tasks[i].eta;
        instances[i] = {conf[i], eval.realized_correct[i], eval.tasks[i].prompt_id};
    }
    const auto report = metrics::evaluate(instances, cfg.ece_bins);

    RoundRecord record;
    record.round = round;
    record.spearman_vs_eta = spearman_or_zero(conf, eta);
    record.spearman_vs_kappa = spearman_or_zero(conf, eval.kappa);
    record.ece = report.ece;
    record.aurc = report.aurc;
    record.e_aurc = report.e_aurc;
    return record;
}

}  // namespace detail

// The full warm start -> reference set -> candidate sampling -> SC/NRD
// scoring -> DPO update loop. Deterministic given the config.
inline TrainingTrajectory run_training(const TrainingConfig& cfg) {
    if (cfg.n_train < 2 || cfg.n_anchor < 2 || cfg.n_eval < 4) {
        throw InvalidInput("run_training: splits too small");
    }
    if (cfg.candidates_per_prompt < 2) {
        throw InvalidInput("run_training: need at least 2 candidates per prompt");
    }
    if (cfg.ensemble_size < 1 || cfg.rounds < 0 || cfg.learning_rate <= 0.0 ||
        cfg.beta <= 0.0 || cfg.feature_bins < 1 || cfg.anchor_capacity < 2) {
        throw InvalidInput("run_training: invalid configuration");
    }
    if (!(cfg.warm_start_rho_target > -1.0 && cfg.warm_start_rho_target < 1.0)) {
        throw InvalidInput("run_training: warm_start_rho_target must lie in (-1,1)");
    }

    const auto train = detail::make_split(cfg.n_train, cfg, 11, "train-");
    const auto anchor = detail::make_split(cfg.n_anchor, cfg, 23, "anchor-");
    const auto eval = detail::make_split(cfg.n_eval, cfg, 37, "eval-");

    TrainingTrajectory traj;
    traj.config = cfg;
    auto [policy, noise_scale] =
        detail::warm_start_policy(cfg, train, &traj.warm_start_rho_vs_kappa);
    traj.warm_start_noise_scale = noise_scale;

    const ToyConfidencePolicy reference = policy;  // frozen warm-start policy
    traj.rounds.push_back(detail::evaluate_policy(policy, eval, cfg, 0));

    std::vector<int> train_bins(train.tasks.size());
    for (std::size_t i = 0; i < train.tasks.size(); ++i) {
        train_bins[i] = policy.bin_of(train.tasks[i].feature);
    }

    rng::Rng sampler(rng::derive_seed(cfg.seed, 41));
    const preference::ReferenceSet* prev_refs = nullptr;
    preference::ReferenceSet refs;

    for (int round = 1; round <= cfg.rounds; ++round) {
        std::map<std::string, double> greedy;
        for (const auto& task : anchor.tasks) {
            greedy[task.prompt_id] = policy.greedy_confidence(task.feature);
        }
        refs = preference::refresh_reference_set(greedy, anchor.surrogates,
                                                 cfg.anchor_capacity, prev_refs);
        prev_refs = &refs;

        std::vector<LevelPair> pairs;
        pairs.reserve(train.tasks.size());
        for (std::size_t i = 0; i < train.tasks.size(); ++i) {
            const int bin = train_bins[i];
            const auto probs = policy.softmax_row(bin);
            std::vector<int> level_of_sample(cfg.candidates_per_prompt);
            std::vector<preference::ConfidenceCandidate> cands(cfg.candidates_per_prompt);
            for (int s = 0; s < cfg.candidates_per_prompt; ++s) {
                const int level = static_cast<int>(sampler.categorical(probs));
                level_of_sample[s] = level;
                cands[s] = {train.tasks[i].prompt_id, s,
                            ToyConfidencePolicy::level_value(level), "", 0.0, true};
            }
            const auto scored =
                preference::score_candidates(std::move(cands), train.kappa[i], refs,
                                             cfg.reward_kind);
            const auto pair = preference::extract_pair(scored);
            if (!pair.has_value()) continue;  // all candidates tied: skip
            pairs.push_back({bin, level_of_sample[pair->chosen.sample_index],
                             level_of_sample[pair->rejected.sample_index]});
        }

        RoundRecord record;
        if (pairs.empty()) {
            record = detail::evaluate_policy(policy, eval, cfg, round);
            record.no_pairs = true;
            traj.rounds.push_back(record);
            continue;
        }

        const double mean_loss = dpo_batch_loss(policy, reference, pairs, cfg.beta);
        const auto grad = dpo_batch_grad(policy, reference, pairs, cfg.beta);
        for (std::size_t i = 0; i < policy.logits.size(); ++i) {
            policy.logits[i] -= cfg.learning_rate * grad[i];
        }
        policy.check_normalization();

        record = detail::evaluate_policy(policy, eval, cfg, round);
        record.mean_dpo_loss = mean_loss;
        record.pair_count = pairs.size();
        traj.rounds.push_back(record);
    }
    return traj;
}

}  // namespace confrank::sim
