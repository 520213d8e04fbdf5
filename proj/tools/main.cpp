// confrank command-line pipeline: sample-answers, build-surrogate,
// elicit-conf, build-prefs, eval, simulate, verify-theory.
//
// Exit codes: 0 success, 2 validation, 3 transport, 4 insufficient data.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "confrank/http_transport.hpp"
#include "confrank/pipeline.hpp"

namespace {

using confrank::pipeline::PipelineConfig;
using confrank::pipeline::StageResult;

confrank::pipeline::detail::Backend make_http_backend(
    const confrank::gateway::EndpointConfig& endpoint) {
    confrank::pipeline::detail::Backend backend;
    auto wire = std::make_unique<confrank::gateway::HttplibTransport>(endpoint);
    backend.impl =
        std::make_unique<confrank::gateway::ChatClient>(endpoint, *wire);
    backend.wire = std::move(wire);
    return backend;
}

void add_common_flags(CLI::App* cmd, PipelineConfig& config, std::string& config_file,
                      bool* seed_given) {
    cmd->add_option("--config", config_file,
                    "JSON config file; values in it override flags");
    cmd->add_option("--seed", config.seed, "random seed")
        ->each([seed_given](const std::string&) { *seed_given = true; });
    cmd->add_option("--ensemble-size,-K", config.ensemble_size,
                    "answer samples per prompt (K)");
    cmd->add_option("--candidates", config.candidates_per_prompt,
                    "confidence candidates per prompt");
    cmd->add_option("--temperature", config.temperature, "sampling temperature");
    cmd->add_option("--ece-bins", config.ece_bins, "equal-width ECE bins");
    cmd->add_option("--beta", config.beta, "DPO beta");
    cmd->add_option("--anchor-capacity", config.anchor_capacity,
                    "reference-set capacity");
    cmd->add_option_function<std::string>(
        "--reward",
        [&config](const std::string& value) {
            config.reward_kind = confrank::pipeline::reward_kind_from(value);
        },
        "reward kind: SC or NRD");
    cmd->add_option("--fixture-dir", config.fixture_dir,
                    "offline fixture directory (replaces the endpoint)");
    cmd->add_option("--base-url", config.endpoint.base_url,
                    "chat-completions endpoint base URL");
    cmd->add_option("--model", config.endpoint.model_name, "model name");
    cmd->add_option("--api-key-env", config.endpoint.api_key_env,
                    "environment variable holding the API key");
    cmd->add_option("--timeout", config.endpoint.timeout_seconds,
                    "request timeout in seconds");
    cmd->add_option("--max-retries", config.endpoint.max_retries,
                    "transient-failure retries");
    cmd->add_option("--max-concurrency", config.endpoint.max_concurrency,
                    "maximum in-flight requests");
}

int run_stage(const std::string& name, PipelineConfig& config,
              const std::string& config_file, bool seed_given,
              StageResult (*stage)(const PipelineConfig&)) {
    config.seed_set = seed_given;
    if (!config_file.empty()) {
        confrank::pipeline::apply_config_file(config, config_file);
    }
    const auto result = stage(config);
    std::cout << name << ": wrote " << result.output_path << "\n"
              << "  digest   " << result.digest << "\n"
              << "  manifest " << result.manifest_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    confrank::pipeline::detail::http_backend_factory() = &make_http_backend;

    CLI::App app{"decoupled order-aware verbalized-confidence toolkit"};
    app.require_subcommand(1);

    PipelineConfig config;
    std::string config_file;
    bool seed_given = false;

    struct StageCommand {
        CLI::App* cmd;
        StageResult (*fn)(const PipelineConfig&);
    };
    std::vector<StageCommand> stages;

    auto* sample = app.add_subcommand("sample-answers",
                                      "sample K answers per prompt and grade them");
    sample->add_option("--prompts", config.prompts_path, "prompts.jsonl input");
    sample->add_option("--answers", config.answers_path, "answers.jsonl output");
    stages.push_back({sample, &confrank::pipeline::cmd_sample_answers});

    auto* surrogate = app.add_subcommand(
        "build-surrogate", "reduce answer ensembles to per-prompt surrogates");
    surrogate->add_option("--prompts", config.prompts_path, "prompts.jsonl input");
    surrogate->add_option("--answers", config.answers_path, "answers.jsonl input");
    surrogate->add_option("--surrogate", config.surrogate_path,
                          "surrogate.jsonl output");
    stages.push_back({surrogate, &confrank::pipeline::cmd_build_surrogate});

    auto* elicit = app.add_subcommand(
        "elicit-conf", "sample verbalized confidences for realized answers");
    elicit->add_option("--prompts", config.prompts_path, "prompts.jsonl input");
    elicit->add_option("--surrogate", config.surrogate_path, "surrogate.jsonl input");
    elicit->add_option("--answers", config.answers_path,
                       "answers.jsonl (for the decoupling assertion)");
    elicit->add_option("--confidences", config.confidences_path,
                       "confidences.jsonl output");
    stages.push_back({elicit, &confrank::pipeline::cmd_elicit_conf});

    auto* prefs = app.add_subcommand(
        "build-prefs", "score candidates against anchors and extract DPO pairs");
    prefs->add_option("--prompts", config.prompts_path, "prompts.jsonl input");
    prefs->add_option("--surrogate", config.surrogate_path, "surrogate.jsonl input");
    prefs->add_option("--confidences", config.confidences_path,
                      "confidences.jsonl input");
    prefs->add_option("--anchor-confidences", config.anchor_confidences_path,
                      "anchor-split confidences.jsonl (greedy elicitation)");
    prefs->add_option("--anchor-surrogate", config.anchor_surrogate_path,
                      "anchor-split surrogate.jsonl");
    prefs->add_option("--answers", config.answers_path,
                      "answers.jsonl (for the decoupling assertion)");
    prefs->add_option("--prefs", config.prefs_path, "prefs.jsonl output");
    stages.push_back({prefs, &confrank::pipeline::cmd_build_prefs});

    auto* eval = app.add_subcommand("eval",
                                    "calibration and failure-prediction report");
    eval->add_option("--surrogate", config.surrogate_path, "surrogate.jsonl input");
    eval->add_option("--confidences", config.confidences_path,
                     "confidences.jsonl input");
    eval->add_option("--answers", config.answers_path,
                     "answers.jsonl (for the decoupling assertion)");
    eval->add_option("--report", config.report_path, "eval_report.json output");
    stages.push_back({eval, &confrank::pipeline::cmd_eval});

    auto* simulate = app.add_subcommand(
        "simulate", "desk-scale warm-start + rank-reward + DPO training loop");
    simulate->add_option("--trajectory", config.trajectory_path,
                         "trajectory.json output");
    simulate->add_option("--n-train", config.n_train, "training prompts");
    simulate->add_option("--n-anchor", config.n_anchor, "anchor prompts");
    simulate->add_option("--n-eval", config.n_eval, "held-out eval prompts");
    simulate->add_option("--rounds", config.rounds, "training rounds");
    simulate->add_option("--learning-rate", config.learning_rate,
                         "full-batch gradient step size");
    simulate->add_option("--warm-start-rho", config.warm_start_rho_target,
                         "warm-start Spearman target in (-1,1)");
    stages.push_back({simulate, &confrank::pipeline::cmd_simulate});

    auto* verify = app.add_subcommand("verify-theory",
                                      "rank-alignment and surrogate checks");
    verify->add_option("--report", config.theory_report_path,
                       "theory_report.json output");
    verify->add_option("--n", config.n_rank_check, "sample size for the rank checks");
    verify->add_option("--n-consistency", config.n_consistency,
                       "sample size for the surrogate-consistency check");
    stages.push_back({verify, &confrank::pipeline::cmd_verify_theory});

    for (auto& spec : stages) {
        add_common_flags(spec.cmd, config, config_file, &seed_given);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        for (const auto& spec : stages) {
            if (spec.cmd->parsed()) {
                return run_stage(spec.cmd->get_name(), config, config_file, seed_given,
                                 spec.fn);
            }
        }
        std::cerr << "no subcommand selected\n";
        return 2;
    } catch (const confrank::TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return 3;
    } catch (const confrank::AuthError& e) {
        std::cerr << "auth error: " << e.what() << "\n";
        return 3;
    } catch (const confrank::InsufficientData& e) {
        std::cerr << "insufficient data: " << e.what() << "\n";
        return 4;
    } catch (const confrank::InsufficientAnchors& e) {
        std::cerr << "insufficient anchors: " << e.what() << "\n";
        return 4;
    } catch (const confrank::InsufficientCandidates& e) {
        std::cerr << "insufficient candidates: " << e.what() << "\n";
        return 4;
    } catch (const confrank::DegenerateSeries& e) {
        std::cerr << "degenerate series: " << e.what() << "\n";
        return 4;
    } catch (const confrank::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
