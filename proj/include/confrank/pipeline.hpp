#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "confrank/gateway.hpp"
#include "confrank/metrics.hpp"
#include "confrank/preference.hpp"
#include "confrank/sim.hpp"
#include "confrank/store.hpp"
#include "confrank/surrogate.hpp"

// Pipeline stages behind the CLI subcommands. Every stage validates its
// inputs, writes its output atomically, and records a RunManifest next to
// the output; stages downstream of answer sampling assert that the answers
// dataset is byte-identical to what its producer recorded.

namespace confrank::pipeline {

struct PipelineConfig {
    // dataset paths
    std::string prompts_path;
    std::string answers_path;
    std::string surrogate_path;
    std::string confidences_path;
    std::string prefs_path;
    std::string report_path;
    std::string trajectory_path;
    std::string theory_report_path;
    // anchor split used by build-prefs
    std::string anchor_confidences_path;
    std::string anchor_surrogate_path;
    // knobs (defaults centralize every unspecified constant)
    int ensemble_size = 8;
    int candidates_per_prompt = 8;
    double temperature = 1.0;
    std::size_t ece_bins = 10;
    double beta = 0.1;
    preference::RewardKind reward_kind = preference::RewardKind::SC;
    std::size_t anchor_capacity = 256;
    std::uint64_t seed = 0;
    bool seed_set = false;
    // endpoint / fixture mode
    gateway::EndpointConfig endpoint;
    std::string fixture_dir;  // nonempty selects offline fixture replay
    gateway::ElicitationTemplate templates = gateway::default_templates();
    // simulation knobs
    std::size_t n_train = 2000;
    std::size_t n_anchor = 300;
    std::size_t n_eval = 1000;
    int rounds = 30;
    double learning_rate = 100.0;
    double warm_start_rho_target = 0.3;
    std::size_t n_rank_check = 10000;
    std::size_t n_consistency = 2000;
};

struct StageResult {
    std::string output_path;
    std::string digest;
    std::string manifest_path;
};

inline std::string reward_kind_name(preference::RewardKind kind) {
    return kind == preference::RewardKind::SC ? "SC" : "NRD";
}

inline preference::RewardKind reward_kind_from(const std::string& name) {
    if (name == "SC" || name == "sc") return preference::RewardKind::SC;
    if (name == "NRD" || name == "nrd") return preference::RewardKind::NRD;
    throw InvalidInput("unknown reward kind '" + name + "' (expected SC or NRD)");
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["prompts_path"] = c.prompts_path;
    j["answers_path"] = c.answers_path;
    j["surrogate_path"] = c.surrogate_path;
    j["confidences_path"] = c.confidences_path;
    j["prefs_path"] = c.prefs_path;
    j["report_path"] = c.report_path;
    j["trajectory_path"] = c.trajectory_path;
    j["theory_report_path"] = c.theory_report_path;
    j["anchor_confidences_path"] = c.anchor_confidences_path;
    j["anchor_surrogate_path"] = c.anchor_surrogate_path;
    j["ensemble_size"] = c.ensemble_size;
    j["candidates_per_prompt"] = c.candidates_per_prompt;
    j["temperature"] = c.temperature;
    j["ece_bins"] = c.ece_bins;
    j["beta"] = c.beta;
    j["reward_kind"] = reward_kind_name(c.reward_kind);
    j["anchor_capacity"] = c.anchor_capacity;
    j["seed"] = c.seed;
    j["fixture_dir"] = c.fixture_dir;
    j["base_url"] = c.endpoint.base_url;
    j["model_name"] = c.endpoint.model_name;
    j["api_key_env"] = c.endpoint.api_key_env;
    j["timeout_seconds"] = c.endpoint.timeout_seconds;
    j["max_retries"] = c.endpoint.max_retries;
    j["max_concurrency"] = c.endpoint.max_concurrency;
    j["answer_template"] = c.templates.answer_template;
    j["confidence_template"] = c.templates.confidence_template;
    j["n_train"] = c.n_train;
    j["n_anchor"] = c.n_anchor;
    j["n_eval"] = c.n_eval;
    j["rounds"] = c.rounds;
    j["learning_rate"] = c.learning_rate;
    j["warm_start_rho_target"] = c.warm_start_rho_target;
    j["n_rank_check"] = c.n_rank_check;
    j["n_consistency"] = c.n_consistency;
    return j;
}

// Values present in the config file override the corresponding flags.
inline void apply_config_file(PipelineConfig& c, const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(store::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation("config file '" + path + "': " + e.what());
    }
    const auto str = [&](const char* key, std::string& out) {
        if (j.contains(key)) out = j.at(key).get<std::string>();
    };
    str("prompts_path", c.prompts_path);
    str("answers_path", c.answers_path);
    str("surrogate_path", c.surrogate_path);
    str("confidences_path", c.confidences_path);
    str("prefs_path", c.prefs_path);
    str("report_path", c.report_path);
    str("trajectory_path", c.trajectory_path);
    str("theory_report_path", c.theory_report_path);
    str("anchor_confidences_path", c.anchor_confidences_path);
    str("anchor_surrogate_path", c.anchor_surrogate_path);
    str("fixture_dir", c.fixture_dir);
    str("base_url", c.endpoint.base_url);
    str("model_name", c.endpoint.model_name);
    str("api_key_env", c.endpoint.api_key_env);
    str("answer_template", c.templates.answer_template);
    str("confidence_template", c.templates.confidence_template);
    if (j.contains("ensemble_size")) c.ensemble_size = j.at("ensemble_size").get<int>();
    if (j.contains("candidates_per_prompt")) {
        c.candidates_per_prompt = j.at("candidates_per_prompt").get<int>();
    }
    if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
    if (j.contains("ece_bins")) c.ece_bins = j.at("ece_bins").get<std::size_t>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("reward_kind")) {
        c.reward_kind = reward_kind_from(j.at("reward_kind").get<std::string>());
    }
    if (j.contains("anchor_capacity")) {
        c.anchor_capacity = j.at("anchor_capacity").get<std::size_t>();
    }
    if (j.contains("seed")) {
        c.seed = j.at("seed").get<std::uint64_t>();
        c.seed_set = true;
    }
    if (j.contains("timeout_seconds")) {
        c.endpoint.timeout_seconds = j.at("timeout_seconds").get<double>();
    }
    if (j.contains("max_retries")) c.endpoint.max_retries = j.at("max_retries").get<int>();
    if (j.contains("max_concurrency")) {
        c.endpoint.max_concurrency = j.at("max_concurrency").get<int>();
    }
    if (j.contains("n_train")) c.n_train = j.at("n_train").get<std::size_t>();
    if (j.contains("n_anchor")) c.n_anchor = j.at("n_anchor").get<std::size_t>();
    if (j.contains("n_eval")) c.n_eval = j.at("n_eval").get<std::size_t>();
    if (j.contains("rounds")) c.rounds = j.at("rounds").get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("warm_start_rho_target")) {
        c.warm_start_rho_target = j.at("warm_start_rho_target").get<double>();
    }
    if (j.contains("n_rank_check")) c.n_rank_check = j.at("n_rank_check").get<std::size_t>();
    if (j.contains("n_consistency")) {
        c.n_consistency = j.at("n_consistency").get<std::size_t>();
    }
}

namespace detail {

struct Backend {
    std::unique_ptr<gateway::WireTransport> wire;
    std::unique_ptr<gateway::CompletionBackend> impl;
};

// Defined in the CLI translation unit for HTTP, header-only for fixtures;
// kept behind a function pointer so pipeline.hpp does not pull in httplib.
using HttpBackendFactory = Backend (*)(const gateway::EndpointConfig&);
inline HttpBackendFactory& http_backend_factory() {
    static HttpBackendFactory factory = nullptr;
    return factory;
}

inline Backend make_backend(const PipelineConfig& config) {
    Backend backend;
    if (!config.fixture_dir.empty()) {
        backend.impl = std::make_unique<gateway::FixtureBackend>(config.fixture_dir);
        return backend;
    }
    if (config.endpoint.base_url.empty()) {
        throw InvalidInput("either --fixture-dir or --base-url is required");
    }
    if (http_backend_factory() == nullptr) {
        throw InvalidInput("HTTP backend unavailable in this build");
    }
    return http_backend_factory()(config.endpoint);
}

inline void require_seed(const PipelineConfig& config) {
    if (!config.seed_set) {
        throw InvalidInput("--seed is required for stochastic stages");
    }
}

inline void require_path(const std::string& path, const char* what) {
    if (path.empty()) throw InvalidInput(std::string("missing path: ") + what);
}

inline std::string manifest_path_for(const std::string& output_path) {
    return output_path + ".manifest.json";
}

// Decoupling assertion: if the answers dataset and its producing manifest
// exist, the current digest must match the recorded one. Returns the digest
// so the calling stage can record it among its inputs.
inline std::optional<std::pair<std::string, std::string>> assert_answers_unchanged(
    const PipelineConfig& config) {
    if (config.answers_path.empty() ||
        !std::filesystem::exists(config.answers_path)) {
        return std::nullopt;
    }
    const std::string current = store::file_digest(config.answers_path);
    const auto manifest_path = manifest_path_for(config.answers_path);
    if (std::filesystem::exists(manifest_path)) {
        const auto manifest = store::read_manifest(manifest_path);
        for (const auto& [path, digest] : manifest.output_digests) {
            if (path == config.answers_path && digest != current) {
                throw SchemaViolation(
                    "answers dataset changed since it was produced; confidence-side "
                    "stages must leave it untouched");
            }
        }
    }
    std::cerr << "answers digest asserted unchanged: " << current << "\n";
    return std::make_pair(config.answers_path, current);
}

inline StageResult finish_stage(store::Stage stage, const PipelineConfig& config,
                                std::vector<std::pair<std::string, std::string>> inputs,
                                const std::string& output_path,
                                const std::string& digest) {
    auto manifest = store::make_manifest(stage, config_to_json(config), config.seed);
    manifest.input_digests = std::move(inputs);
    manifest.output_digests.emplace_back(output_path, digest);
    const auto manifest_path = manifest_path_for(output_path);
    store::write_manifest(manifest, manifest_path);
    return {output_path, digest, manifest_path};
}

// Lowest-index valid confidence per prompt.
inline std::map<std::string, preference::ConfidenceCandidate> first_valid_by_prompt(
    const std::vector<preference::ConfidenceCandidate>& candidates) {
    std::map<std::string, preference::ConfidenceCandidate> best;
    for (const auto& cand : candidates) {
        if (!cand.valid) continue;
        const auto it = best.find(cand.prompt_id);
        if (it == best.end() || cand.sample_index < it->second.sample_index) {
            best[cand.prompt_id] = cand;
        }
    }
    return best;
}

}  // namespace detail

// Stage (i): K answer samples per prompt, correctness graded against the
// reference.
inline StageResult cmd_sample_answers(const PipelineConfig& config) {
    detail::require_seed(config);
    detail::require_path(config.prompts_path, "--prompts");
    detail::require_path(config.answers_path, "--answers");
    const auto prompts = store::read_prompts(config.prompts_path);
    auto backend = detail::make_backend(config);

    std::vector<surrogate::AnswerSample> answers;
    std::size_t parse_warnings = 0;
    for (const auto& prompt : prompts) {
        const std::string seed_tag =
            "answers:" + std::to_string(config.seed) + ":" + prompt.id;
        auto samples = gateway::sample_answers(prompt, config.ensemble_size,
                                               config.temperature, config.endpoint,
                                               config.templates, seed_tag, *backend.impl);
        for (auto& sample : samples) {
            const auto graded =
                surrogate::grade(sample.text, prompt.reference, prompt.task_kind);
            sample.correct = graded.correct;
            parse_warnings += graded.parse_warning ? 1 : 0;
            answers.push_back(std::move(sample));
        }
    }
    if (parse_warnings > 0) {
        std::cerr << "grading parse warnings: " << parse_warnings << "\n";
    }
    const auto digest = store::write_answers(answers, config.answers_path);
    return detail::finish_stage(
        store::Stage::answers, config,
        {{config.prompts_path, store::file_digest(config.prompts_path)}},
        config.answers_path, digest);
}

// Stage: per-prompt surrogate estimates and realized answers.
inline StageResult cmd_build_surrogate(const PipelineConfig& config) {
    detail::require_path(config.prompts_path, "--prompts");
    detail::require_path(config.answers_path, "--answers");
    detail::require_path(config.surrogate_path, "--surrogate");
    const auto prompts = store::read_prompts(config.prompts_path);
    const auto answers = store::read_answers(config.answers_path);
    const auto records =
        surrogate::build_surrogate_dataset(prompts, answers, config.ensemble_size);
    const auto digest = store::write_surrogates(records, config.surrogate_path);
    return detail::finish_stage(
        store::Stage::surrogate, config,
        {{config.prompts_path, store::file_digest(config.prompts_path)},
         {config.answers_path, store::file_digest(config.answers_path)}},
        config.surrogate_path, digest);
}

// Stage (ii): verbalized-confidence candidates for each realized pair.
inline StageResult cmd_elicit_conf(const PipelineConfig& config) {
    detail::require_seed(config);
    detail::require_path(config.prompts_path, "--prompts");
    detail::require_path(config.surrogate_path, "--surrogate");
    detail::require_path(config.confidences_path, "--confidences");
    const auto prompts = store::read_prompts(config.prompts_path);
    const auto surrogates = store::read_surrogates(config.surrogate_path);
    auto backend = detail::make_backend(config);

    std::map<std::string, const surrogate::PromptRecord*> prompt_by_id;
    for (const auto& p : prompts) prompt_by_id[p.id] = &p;

    std::vector<std::pair<std::string, std::string>> inputs{
        {config.prompts_path, store::file_digest(config.prompts_path)},
        {config.surrogate_path, store::file_digest(config.surrogate_path)}};
    if (const auto asserted = detail::assert_answers_unchanged(config)) {
        inputs.push_back(*asserted);
    }

    std::vector<preference::ConfidenceCandidate> all;
    std::size_t invalid = 0;
    for (const auto& record : surrogates) {
        const auto it = prompt_by_id.find(record.prompt_id);
        if (it == prompt_by_id.end()) {
            throw SchemaViolation("surrogate references unknown prompt '" +
                                  record.prompt_id + "'");
        }
        const std::string seed_tag =
            "confidences:" + std::to_string(config.seed) + ":" + record.prompt_id;
        const auto candidates = gateway::elicit_confidences(
            *it->second, record.realized_answer, config.candidates_per_prompt,
            config.temperature, config.endpoint, config.templates, seed_tag,
            *backend.impl);
        for (const auto& cand : candidates) {
            invalid += cand.valid ? 0 : 1;
            all.push_back(cand);
        }
    }
    if (invalid > 0) std::cerr << "unparseable confidences: " << invalid << "\n";
    const auto digest = store::write_confidences(all, config.confidences_path);
    return detail::finish_stage(store::Stage::confidences, config, std::move(inputs),
                                config.confidences_path, digest);
}

// Stages (iii)-(iv): score candidates against the anchor reference set and
// extract preferred/rejected pairs.
inline StageResult cmd_build_prefs(const PipelineConfig& config) {
    detail::require_path(config.prompts_path, "--prompts");
    detail::require_path(config.surrogate_path, "--surrogate");
    detail::require_path(config.confidences_path, "--confidences");
    detail::require_path(config.anchor_confidences_path, "--anchor-confidences");
    detail::require_path(config.anchor_surrogate_path, "--anchor-surrogate");
    detail::require_path(config.prefs_path, "--prefs");

    const auto prompts = store::read_prompts(config.prompts_path);
    const auto surrogates = store::read_surrogates(config.surrogate_path);
    const auto confidences = store::read_confidences(config.confidences_path);
    const auto anchor_conf = store::read_confidences(config.anchor_confidences_path);
    const auto anchor_surr = store::read_surrogates(config.anchor_surrogate_path);

    std::vector<std::pair<std::string, std::string>> inputs{
        {config.prompts_path, store::file_digest(config.prompts_path)},
        {config.surrogate_path, store::file_digest(config.surrogate_path)},
        {config.confidences_path, store::file_digest(config.confidences_path)},
        {config.anchor_confidences_path,
         store::file_digest(config.anchor_confidences_path)},
        {config.anchor_surrogate_path,
         store::file_digest(config.anchor_surrogate_path)}};
    if (const auto asserted = detail::assert_answers_unchanged(config)) {
        inputs.push_back(*asserted);
    }

    std::map<std::string, double> greedy;
    for (const auto& [id, cand] : detail::first_valid_by_prompt(anchor_conf)) {
        greedy[id] = cand.value;
    }
    const auto refs = preference::refresh_reference_set(greedy, anchor_surr,
                                                        config.anchor_capacity);

    std::map<std::string, const surrogate::PromptRecord*> prompt_by_id;
    for (const auto& p : prompts) prompt_by_id[p.id] = &p;
    std::map<std::string, std::vector<preference::ConfidenceCandidate>> by_prompt;
    for (const auto& cand : confidences) {
        if (cand.valid) by_prompt[cand.prompt_id].push_back(cand);
    }

    std::vector<preference::PreferencePair> pairs;
    std::size_t skipped_tied = 0, skipped_short = 0;
    for (const auto& record : surrogates) {
        const auto cands_it = by_prompt.find(record.prompt_id);
        if (cands_it == by_prompt.end() || cands_it->second.size() < 2) {
            ++skipped_short;
            continue;
        }
        const auto prompt_it = prompt_by_id.find(record.prompt_id);
        if (prompt_it == prompt_by_id.end()) {
            throw SchemaViolation("surrogate references unknown prompt '" +
                                  record.prompt_id + "'");
        }
        const auto scored = preference::score_candidates(
            cands_it->second, record.kappa_s, refs, config.reward_kind);
        const std::string context = gateway::render_confidence_prompt(
            config.templates, prompt_it->second->prompt, record.realized_answer);
        const auto pair = preference::extract_pair(scored, context);
        if (!pair.has_value()) {
            ++skipped_tied;
            continue;
        }
        pairs.push_back(*pair);
    }
    if (skipped_tied > 0 || skipped_short > 0) {
        std::cerr << "prompts skipped: " << skipped_tied << " all-tied, "
                  << skipped_short << " with fewer than 2 valid candidates\n";
    }
    const auto digest = store::write_prefs(pairs, config.prefs_path);
    return detail::finish_stage(store::Stage::prefs, config, std::move(inputs),
                                config.prefs_path, digest);
}

// Evaluation: first valid confidence per prompt against realized correctness.
inline StageResult cmd_eval(const PipelineConfig& config) {
    detail::require_path(config.surrogate_path, "--surrogate");
    detail::require_path(config.confidences_path, "--confidences");
    detail::require_path(config.report_path, "--report");
    const auto surrogates = store::read_surrogates(config.surrogate_path);
    const auto confidences = store::read_confidences(config.confidences_path);

    std::vector<std::pair<std::string, std::string>> inputs{
        {config.surrogate_path, store::file_digest(config.surrogate_path)},
        {config.confidences_path, store::file_digest(config.confidences_path)}};
    if (const auto asserted = detail::assert_answers_unchanged(config)) {
        inputs.push_back(*asserted);
    }

    const auto best = detail::first_valid_by_prompt(confidences);
    std::vector<metrics::EvalInstance> instances;
    std::size_t excluded = 0;
    for (const auto& record : surrogates) {
        const auto it = best.find(record.prompt_id);
        if (it == best.end()) {
            ++excluded;
            continue;
        }
        instances.push_back(
            {it->second.value, record.realized_correct, record.prompt_id});
    }
    if (excluded > 0) {
        std::cerr << "prompts without a valid confidence: " << excluded << "\n";
    }
    if (instances.size() < 4) {
        throw InsufficientData("eval: need at least 4 scored prompts");
    }
    const auto report = metrics::evaluate(instances, config.ece_bins);
    auto j = store::eval_report_to_json(report);
    j["excluded_prompts"] = excluded;
    const auto digest = store::write_file_atomic(config.report_path, j.dump(2) + "\n");
    return detail::finish_stage(store::Stage::eval, config, std::move(inputs),
                                config.report_path, digest);
}

namespace detail {

inline nlohmann::ordered_json trajectory_to_json(const sim::TrainingTrajectory& traj) {
    nlohmann::ordered_json j;
    const auto& cfg = traj.config;
    j["config"] = {{"n_train", cfg.n_train},
                   {"n_anchor", cfg.n_anchor},
                   {"n_eval", cfg.n_eval},
                   {"ensemble_size", cfg.ensemble_size},
                   {"candidates_per_prompt", cfg.candidates_per_prompt},
                   {"beta", cfg.beta},
                   {"rounds", cfg.rounds},
                   {"learning_rate", cfg.learning_rate},
                   {"warm_start_rho_target", cfg.warm_start_rho_target},
                   {"reward_kind", reward_kind_name(cfg.reward_kind)},
                   {"seed", cfg.seed},
                   {"sigma_obs", cfg.sigma_obs},
                   {"feature_bins", cfg.feature_bins},
                   {"anchor_capacity", cfg.anchor_capacity},
                   {"ece_bins", cfg.ece_bins}};
    j["warm_start"] = {
        {"rho_target", cfg.warm_start_rho_target},
        {"rho_achieved_vs_kappa", traj.warm_start_rho_vs_kappa},
        {"noise_scale", traj.warm_start_noise_scale},
        {"orientation", cfg.warm_start_rho_target >= 0.0 ? "positive" : "negative"}};
    j["rounds"] = nlohmann::ordered_json::array();
    for (const auto& r : traj.rounds) {
        j["rounds"].push_back({{"round", r.round},
                               {"spearman_vs_eta", r.spearman_vs_eta},
                               {"spearman_vs_kappa", r.spearman_vs_kappa},
                               {"ece", r.ece},
                               {"aurc", r.aurc},
                               {"e_aurc", r.e_aurc},
                               {"mean_dpo_loss", r.mean_dpo_loss},
                               {"pair_count", r.pair_count},
                               {"no_pairs", r.no_pairs}});
    }
    const auto& first = traj.rounds.front();
    const auto& last = traj.rounds.back();
    j["final"] = {{"spearman_vs_eta", last.spearman_vs_eta},
                  {"spearman_vs_kappa", last.spearman_vs_kappa},
                  {"ece", last.ece},
                  {"ece_improved", last.ece <= first.ece}};
    if (cfg.warm_start_rho_target < 0.0) {
        // orientation failure mode: an anti-aligned warm start keeps the
        // refinement on the wrong monotone trend
        j["wrong_trend"] = {{"warm_start_negative", true},
                            {"final_spearman_vs_eta", last.spearman_vs_eta},
                            {"stayed_nonpositive", last.spearman_vs_eta <= 0.0}};
    }
    return j;
}

}  // namespace detail

inline sim::TrainingConfig training_config_from(const PipelineConfig& config) {
    sim::TrainingConfig t;
    t.n_train = config.n_train;
    t.n_anchor = config.n_anchor;
    t.n_eval = config.n_eval;
    t.ensemble_size = config.ensemble_size;
    t.candidates_per_prompt = config.candidates_per_prompt;
    t.beta = config.beta;
    t.rounds = config.rounds;
    t.learning_rate = config.learning_rate;
    t.warm_start_rho_target = config.warm_start_rho_target;
    t.reward_kind = config.reward_kind;
    t.seed = config.seed;
    t.anchor_capacity = config.anchor_capacity;
    t.ece_bins = config.ece_bins;
    return t;
}

// Desk-scale training loop; writes trajectory.json.
inline StageResult cmd_simulate(const PipelineConfig& config) {
    detail::require_seed(config);
    detail::require_path(config.trajectory_path, "--trajectory");
    const auto traj = sim::run_training(training_config_from(config));
    const auto j = detail::trajectory_to_json(traj);
    const auto digest =
        store::write_file_atomic(config.trajectory_path, j.dump(2) + "\n");
    return detail::finish_stage(store::Stage::simulate, config, {},
                                config.trajectory_path, digest);
}

// Rank-alignment theory checks; writes theory_report.json.
inline StageResult cmd_verify_theory(const PipelineConfig& config) {
    detail::require_seed(config);
    detail::require_path(config.theory_report_path, "--report");

    nlohmann::ordered_json j;
    j["rank_optimum"] = nlohmann::ordered_json::array();
    bool all_pass = true;
    const std::vector<sim::MonotoneTransform> transforms{
        {sim::MonotoneTransform::Kind::affine_pos, 3.0, -1.0},
        {sim::MonotoneTransform::Kind::cube_plus_linear, 0.5, 0.0},
        {sim::MonotoneTransform::Kind::logit_like, 1.0, 0.0}};
    for (const auto& transform : transforms) {
        const auto report = sim::verify_rank_optimum(config.n_rank_check, transform, config.seed);
        all_pass = all_pass && report.pass;
        j["rank_optimum"].push_back({{"transform", report.transform},
                                 {"n", report.n},
                                 {"spearman", report.spearman},
                                 {"spearman_negated", report.spearman_negated},
                                 {"pass", report.pass}});
    }

    const std::vector<int> k_list{1, 4, 16, 64, 256};
    const auto consistency =
        sim::verify_consistency(config.n_consistency, k_list, config.seed);
    all_pass = all_pass && consistency.pass;
    j["consistency"] = {{"n", config.n_consistency},
                        {"ensemble_sizes", consistency.ensemble_sizes},
                        {"gaps", consistency.gaps},
                        {"spearman_vs_eta", consistency.spearman_vs_eta},
                        {"inversions", consistency.inversions},
                        {"pass", consistency.pass}};

    // surrogate moments: mean and variance of kappa_s across seeded ensembles
    {
        const double eta = 0.5;
        const int k = 8;
        const std::size_t m = 10000;
        rng::Rng gen(rng::derive_seed(config.seed, 91));
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            int hits = 0;
            for (int draw = 0; draw < k; ++draw) hits += gen.bernoulli(eta);
            const double kappa = static_cast<double>(hits) / k;
            sum += kappa;
            sum_sq += kappa * kappa;
        }
        const double mean = sum / static_cast<double>(m);
        const double var = sum_sq / static_cast<double>(m) - mean * mean;
        const double expected_var = eta * (1.0 - eta) / k;
        const double mean_bound =
            3.0 * std::sqrt(eta * (1.0 - eta) / (k * static_cast<double>(m)));
        const bool moments_pass = std::abs(mean - eta) < mean_bound &&
                                  std::abs(var - expected_var) < 0.2 * expected_var;
        all_pass = all_pass && moments_pass;
        j["surrogate_moments"] = {{"eta", eta},
                                  {"ensemble_size", k},
                                  {"ensembles", m},
                                  {"mean", mean},
                                  {"variance", var},
                                  {"expected_variance", expected_var},
                                  {"mean_bound", mean_bound},
                                  {"pass", moments_pass}};
    }
    j["all_pass"] = all_pass;

    const auto digest =
        store::write_file_atomic(config.theory_report_path, j.dump(2) + "\n");
    return detail::finish_stage(store::Stage::simulate, config, {},
                                config.theory_report_path, digest);
}

}  // namespace confrank::pipeline
