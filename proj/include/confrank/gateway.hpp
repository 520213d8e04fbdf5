#pragma once

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "confrank/errors.hpp"
#include "confrank/preference.hpp"
#include "confrank/rng.hpp"
#include "confrank/store.hpp"
#include "confrank/surrogate.hpp"

// Client for sampling answers and eliciting verbalized confidence from any
// OpenAI-compatible chat-completions endpoint, with the two-stage prompt
// templates, a robust confidence parser, and an offline fixture mode that
// replays canned completions per prompt.

namespace confrank::gateway {

struct EndpointConfig {
    std::string base_url;     // e.g. "http://localhost:8000"
    std::string model_name;
    std::string api_key_env;  // name of the env var holding the key
    double timeout_seconds = 60.0;
    int max_retries = 3;
    int max_concurrency = 4;
    int retry_base_ms = 250;  // exponential backoff base
};

struct ElicitationTemplate {
    std::string answer_template;      // has a {question} slot
    std::string confidence_template;  // has {question} and {answer} slots
    std::vector<std::string> stop_markers;
};

inline ElicitationTemplate default_templates() {
    ElicitationTemplate t;
    t.answer_template =
        "Answer the following question. Reply with only the final answer.\n\n"
        "Question: {question}\n";
    t.confidence_template =
        "You are given a question and a proposed answer. Judge how likely the "
        "answer is to be correct.\nReply with exactly one line of the form "
        "\"Confidence: <decimal between 0 and 1>\".\n\n"
        "Question: {question}\nAnswer: {answer}\n";
    return t;
}

namespace detail {

inline std::string fill_slot(std::string text, const std::string& slot,
                             const std::string& value) {
    const std::string needle = "{" + slot + "}";
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

}  // namespace detail

inline std::string render_answer_prompt(const ElicitationTemplate& t,
                                        const std::string& question) {
    return detail::fill_slot(t.answer_template, "question", question);
}

inline std::string render_confidence_prompt(const ElicitationTemplate& t,
                                            const std::string& question,
                                            const std::string& answer) {
    return detail::fill_slot(
        detail::fill_slot(t.confidence_template, "question", question), "answer",
        answer);
}

// ---------------------------------------------------------------------------
// Confidence parsing
// ---------------------------------------------------------------------------

struct ParseOutcome {
    bool ok = false;
    double value = 0.0;
    std::string error;  // carries the offending text on failure
};

// Precedence: (1) "Confidence:" followed by a decimal (percent accepted),
// (2) a percentage "NN%" divided by 100, (3) the last standalone decimal
// lying in [0,1]. Rule 1/2 values outside [0,1] after normalization fail.
inline ParseOutcome parse_confidence(const std::string& text) {
    if (text.empty()) return {false, 0.0, "empty completion"};

    static const std::regex labeled(
        R"(confidence\s*:\s*([0-9]+(?:\.[0-9]*)?|\.[0-9]+)\s*(%?))",
        std::regex::icase);
    static const std::regex percent(R"(([0-9]+(?:\.[0-9]*)?|\.[0-9]+)\s*%)");
    static const std::regex number(R"([0-9]+(?:\.[0-9]*)?|\.[0-9]+)");

    std::smatch m;
    if (std::regex_search(text, m, labeled)) {
        double v = std::stod(m[1].str());
        if (m[2].matched && m[2].length() > 0) v /= 100.0;
        if (v < 0.0 || v > 1.0) {
            return {false, 0.0, "value outside [0,1] in: " + text};
        }
        return {true, v, ""};
    }
    if (std::regex_search(text, m, percent)) {
        const double v = std::stod(m[1].str()) / 100.0;
        if (v < 0.0 || v > 1.0) {
            return {false, 0.0, "percentage outside [0,100] in: " + text};
        }
        return {true, v, ""};
    }
    std::optional<double> last;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), number);
         it != std::sregex_iterator(); ++it) {
        const std::size_t begin = static_cast<std::size_t>(it->position());
        const std::size_t end = begin + static_cast<std::size_t>(it->length());
        const auto boundary = [&](std::size_t idx) {
            if (idx >= text.size()) return true;
            const char c = text[idx];
            return !(std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                     c == '%');
        };
        if ((begin == 0 || boundary(begin - 1)) && boundary(end)) {
            const double v = std::stod(it->str());
            if (v >= 0.0 && v <= 1.0) last = v;
        }
    }
    if (last.has_value()) return {true, *last, ""};
    return {false, 0.0, "no confidence found in: " + text};
}

// ---------------------------------------------------------------------------
// Transports and backends
// ---------------------------------------------------------------------------

struct ChatRequest {
    std::string model;
    std::string user_content;
    double temperature = 1.0;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> stop;
};

inline std::string chat_request_body(const ChatRequest& req) {
    nlohmann::ordered_json j;
    j["model"] = req.model;
    j["messages"] = nlohmann::ordered_json::array(
        {{{"role", "user"}, {"content", req.user_content}}});
    j["temperature"] = req.temperature;
    j["n"] = 1;
    if (req.seed.has_value()) j["seed"] = *req.seed;
    if (!req.stop.empty()) j["stop"] = req.stop;
    return j.dump();
}

// Identifies one logical completion request: which prompt, which pipeline
// stage, and which sample index.
struct RequestTag {
    std::string prompt_id;
    std::string stage;  // "answers" or "confidences"
    int index = 0;
    std::string seed_tag;
};

struct CompletionResult {
    std::string text;
    int retries = 0;
};

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual CompletionResult complete(const ChatRequest& request,
                                      const RequestTag& tag) = 0;
};

// One HTTP exchange; mockable for retry tests.
class WireTransport {
public:
    struct Response {
        int status = 0;
        std::string body;
        bool transport_failed = false;
        std::string error;
    };

    virtual ~WireTransport() = default;
    virtual Response post(const std::string& path, const std::string& body,
                          const std::vector<std::pair<std::string, std::string>>&
                              headers) = 0;
};

// Chat-completions client: auth header from the configured environment
// variable, exponential backoff on 429/5xx/transport failures, AuthError on
// 401/403 without retry.
class ChatClient : public CompletionBackend {
public:
    ChatClient(EndpointConfig config, WireTransport& wire)
        : config_(std::move(config)), wire_(wire) {}

    CompletionResult complete(const ChatRequest& request,
                              const RequestTag& tag) override {
        std::vector<std::pair<std::string, std::string>> headers{
            {"Content-Type", "application/json"}};
        if (!config_.api_key_env.empty()) {
            const char* key = std::getenv(config_.api_key_env.c_str());
            if (key == nullptr || *key == '\0') {
                throw AuthError("environment variable '" + config_.api_key_env +
                                "' is not set");
            }
            headers.emplace_back("Authorization", std::string("Bearer ") + key);
        }

        const std::string body = chat_request_body(request);
        WireTransport::Response last;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                const auto delay = std::chrono::milliseconds(
                    config_.retry_base_ms * (1L << (attempt - 1)));
                std::this_thread::sleep_for(delay);
            }
            last = wire_.post("/v1/chat/completions", body, headers);
            if (last.status == 401 || last.status == 403) {
                throw AuthError("authentication failed for " + tag.stage + "/" +
                                tag.prompt_id);
            }
            const bool retriable =
                last.transport_failed || last.status == 429 || last.status >= 500;
            if (retriable) continue;
            if (last.status != 200) {
                throw TransportError("request failed with status " +
                                         std::to_string(last.status),
                                     last.status);
            }
            return {extract_content(last.body), attempt};
        }
        throw TransportError("retries exhausted (" +
                                 (last.transport_failed ? last.error
                                                        : "status " + std::to_string(
                                                                          last.status)) +
                                 ")",
                             last.status);
    }

private:
    static std::string extract_content(const std::string& body) {
        try {
            const auto j = nlohmann::json::parse(body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed completion body: ") + e.what(),
                                 200);
        }
    }

    EndpointConfig config_;
    WireTransport& wire_;
};

// Offline replay: completions come from <dir>/<stage>/<prompt_id>.json
// files of the form {"completions": ["...", ...]}; request index i returns
// the i-th entry in file order.
class FixtureBackend : public CompletionBackend {
public:
    explicit FixtureBackend(std::filesystem::path dir) : dir_(std::move(dir)) {}

    CompletionResult complete(const ChatRequest& request,
                              const RequestTag& tag) override {
        (void)request;
        const auto& completions = load(tag.stage, tag.prompt_id);
        if (tag.index < 0 || static_cast<std::size_t>(tag.index) >= completions.size()) {
            throw IoError("fixture for '" + tag.prompt_id + "' in stage '" + tag.stage +
                          "' has " + std::to_string(completions.size()) +
                          " completions, index " + std::to_string(tag.index) +
                          " requested");
        }
        return {completions[static_cast<std::size_t>(tag.index)], 0};
    }

private:
    const std::vector<std::string>& load(const std::string& stage,
                                         const std::string& prompt_id) {
        const std::string key = stage + "/" + prompt_id;
        std::scoped_lock lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const auto path = dir_ / stage / (prompt_id + ".json");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(store::read_file(path));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaViolation("fixture '" + path.string() + "': " + e.what());
        }
        if (!j.contains("completions") || !j["completions"].is_array()) {
            throw SchemaViolation("fixture '" + path.string() +
                                  "' lacks a completions array");
        }
        std::vector<std::string> completions;
        for (const auto& c : j["completions"]) {
            if (!c.is_string()) {
                throw SchemaViolation("fixture '" + path.string() +
                                      "' has a non-string completion");
            }
            completions.push_back(c.get<std::string>());
        }
        return cache_.emplace(key, std::move(completions)).first->second;
    }

    std::filesystem::path dir_;
    std::mutex mutex_;
    std::map<std::string, std::vector<std::string>> cache_;
};

// ---------------------------------------------------------------------------
// Stage operations
// ---------------------------------------------------------------------------

namespace detail {

// Issues one request per sample index in waves of at most max_concurrency,
// and returns the texts ordered by request index.
inline std::vector<std::string> complete_batch(
    CompletionBackend& backend, const ChatRequest& request_proto,
    const std::string& prompt_id, const std::string& stage,
    const std::string& seed_tag, int n, int max_concurrency) {
    if (max_concurrency < 1) throw InvalidInput("max_concurrency must be >= 1");
    std::vector<std::string> texts(static_cast<std::size_t>(n));
    for (int start = 0; start < n; start += max_concurrency) {
        const int end = std::min(n, start + max_concurrency);
        std::vector<std::future<CompletionResult>> futures;
        futures.reserve(static_cast<std::size_t>(end - start));
        for (int i = start; i < end; ++i) {
            futures.push_back(std::async(std::launch::async, [&, i] {
                ChatRequest request = request_proto;
                if (!seed_tag.empty()) {
                    request.seed = rng::derive_seed(rng::fnv1a(seed_tag),
                                                    static_cast<std::uint64_t>(i));
                }
                const RequestTag tag{prompt_id, stage, i, seed_tag};
                return backend.complete(request, tag);
            }));
        }
        for (int i = start; i < end; ++i) {
            texts[static_cast<std::size_t>(i)] =
                futures[static_cast<std::size_t>(i - start)].get().text;
        }
    }
    return texts;
}

}  // namespace detail

// Stage (i): n answer completions for one prompt, correctness left unfilled.
inline std::vector<surrogate::AnswerSample> sample_answers(
    const surrogate::PromptRecord& prompt, int n, double temperature,
    const EndpointConfig& config, const ElicitationTemplate& templates,
    const std::string& seed_tag, CompletionBackend& backend) {
    if (n < 1) throw InvalidInput("sample_answers: n must be >= 1");
    if (n > 1 && temperature <= 0.0) {
        throw InvalidInput("sample_answers: multiple samples need temperature > 0");
    }
    ChatRequest request;
    request.model = config.model_name;
    request.user_content = render_answer_prompt(templates, prompt.prompt);
    request.temperature = temperature;
    request.stop = templates.stop_markers;

    const auto texts = detail::complete_batch(backend, request, prompt.id, "answers",
                                              seed_tag, n, config.max_concurrency);
    std::vector<surrogate::AnswerSample> samples;
    samples.reserve(texts.size());
    for (int i = 0; i < n; ++i) {
        samples.push_back({prompt.id, i, texts[static_cast<std::size_t>(i)], 0});
    }
    return samples;
}

// Stage (ii): n verbalized confidences for a realized (prompt, answer) pair.
// Unparseable completions are flagged invalid rather than dropped here, so
// callers can report the count and exclude them downstream.
inline std::vector<preference::ConfidenceCandidate> elicit_confidences(
    const surrogate::PromptRecord& prompt, const std::string& realized_answer,
    int n, double temperature, const EndpointConfig& config,
    const ElicitationTemplate& templates, const std::string& seed_tag,
    CompletionBackend& backend) {
    if (n < 1) throw InvalidInput("elicit_confidences: n must be >= 1");
    if (n > 1 && temperature <= 0.0) {
        throw InvalidInput("elicit_confidences: multiple samples need temperature > 0");
    }
    ChatRequest request;
    request.model = config.model_name;
    request.user_content =
        render_confidence_prompt(templates, prompt.prompt, realized_answer);
    request.temperature = temperature;
    request.stop = templates.stop_markers;

    const auto texts = detail::complete_batch(backend, request, prompt.id,
                                              "confidences", seed_tag, n,
                                              config.max_concurrency);
    std::vector<preference::ConfidenceCandidate> candidates;
    candidates.reserve(texts.size());
    for (int i = 0; i < n; ++i) {
        const auto& text = texts[static_cast<std::size_t>(i)];
        const auto parsed = parse_confidence(text);
        preference::ConfidenceCandidate cand;
        cand.prompt_id = prompt.id;
        cand.sample_index = i;
        cand.raw_text = text;
        cand.valid = parsed.ok;
        cand.value = parsed.ok ? parsed.value : 0.0;
        candidates.push_back(std::move(cand));
    }
    return candidates;
}

}  // namespace confrank::gateway
