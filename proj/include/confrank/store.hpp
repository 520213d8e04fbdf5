#pragma once

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "confrank/errors.hpp"
#include "confrank/metrics.hpp"
#include "confrank/preference.hpp"
#include "confrank/surrogate.hpp"

// Persistent dataset schemas and run manifests. Files are JSONL with a
// schema/version header line, canonical key order, LF-terminated lines, and
// atomic temp-file-plus-rename writes. Readers validate strictly: unknown
// keys are rejected, required keys and numeric ranges enforced, and the
// first violation aborts with its line number.

namespace confrank::store {

using ordered_json = nlohmann::ordered_json;

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr ||
        EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("sha256: digest computation failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::string file_digest(const std::filesystem::path& path) {
    return sha256_hex(read_file(path));
}

// Atomic write: temp file in the same directory, then rename.
inline std::string write_file_atomic(const std::filesystem::path& path,
                                     std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename to '" + path.string() + "' failed: " + ec.message());
    return sha256_hex(content);
}

namespace detail {

constexpr int kSchemaVersion = 1;

inline void reject_unknown_keys(const ordered_json& obj,
                                std::span<const char* const> allowed,
                                std::size_t line) {
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw SchemaViolation("line " + std::to_string(line) + ": unknown key '" +
                                  key + "'");
        }
    }
}

inline const ordered_json& require_key(const ordered_json& obj, const char* key,
                                       std::size_t line) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        throw SchemaViolation("line " + std::to_string(line) + ": missing key '" +
                              std::string(key) + "'");
    }
    return *it;
}

inline std::string get_string(const ordered_json& obj, const char* key,
                              std::size_t line) {
    const auto& v = require_key(obj, key, line);
    if (!v.is_string()) {
        throw SchemaViolation("line " + std::to_string(line) + ": field '" +
                              std::string(key) + "' must be a string");
    }
    return v.get<std::string>();
}

inline double get_number(const ordered_json& obj, const char* key, std::size_t line,
                         double lo, double hi) {
    const auto& v = require_key(obj, key, line);
    if (!v.is_number()) {
        throw SchemaViolation("line " + std::to_string(line) + ": field '" +
                              std::string(key) + "' must be a number");
    }
    const double x = v.get<double>();
    if (x < lo || x > hi) {
        throw SchemaViolation("line " + std::to_string(line) + ": field '" +
                              std::string(key) + "' out of range");
    }
    return x;
}

inline int get_bit(const ordered_json& obj, const char* key, std::size_t line) {
    const auto& v = require_key(obj, key, line);
    if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
        throw SchemaViolation("line " + std::to_string(line) + ": field '" +
                              std::string(key) + "' must be 0 or 1");
    }
    return v.get<int>();
}

inline int get_int(const ordered_json& obj, const char* key, std::size_t line,
                   long lo, long hi) {
    const auto& v = require_key(obj, key, line);
    if (!v.is_number_integer()) {
        throw SchemaViolation("line " + std::to_string(line) + ": field '" +
                              std::string(key) + "' must be an integer");
    }
    const long x = v.get<long>();
    if (x < lo || x > hi) {
        throw SchemaViolation("line " + std::to_string(line) + ": field '" +
                              std::string(key) + "' out of range");
    }
    return static_cast<int>(x);
}

// Splits a JSONL payload into parsed lines. Every line, including the last,
// must be LF-terminated.
inline std::vector<ordered_json> parse_lines(const std::string& content,
                                             const std::string& schema_name) {
    std::vector<ordered_json> lines;
    if (content.empty()) return lines;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < content.size()) {
        const std::size_t nl = content.find('\n', start);
        ++line_no;
        if (nl == std::string::npos) {
            throw SchemaViolation("line " + std::to_string(line_no) +
                                  ": truncated (missing trailing newline)");
        }
        const std::string_view line(content.data() + start, nl - start);
        ordered_json parsed;
        try {
            parsed = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaViolation("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!parsed.is_object()) {
            throw SchemaViolation("line " + std::to_string(line_no) +
                                  ": expected a JSON object");
        }
        lines.push_back(std::move(parsed));
        start = nl + 1;
    }
    // header line
    static constexpr const char* header_keys[] = {"schema", "version"};
    reject_unknown_keys(lines.front(), header_keys, 1);
    if (get_string(lines.front(), "schema", 1) != schema_name) {
        throw SchemaViolation("line 1: schema mismatch, expected '" + schema_name + "'");
    }
    if (get_int(lines.front(), "version", 1, 1, 1000) != kSchemaVersion) {
        throw SchemaViolation("line 1: unsupported schema version");
    }
    lines.erase(lines.begin());
    return lines;
}

inline std::string render_jsonl(const std::vector<ordered_json>& records,
                                const std::string& schema_name) {
    if (records.empty()) return {};  // empty dataset: empty file
    std::string out;
    ordered_json header;
    header["schema"] = schema_name;
    header["version"] = kSchemaVersion;
    out += header.dump();
    out += '\n';
    for (const auto& rec : records) {
        out += rec.dump();
        out += '\n';
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// prompts.jsonl  {id, prompt, reference, task_kind}
// ---------------------------------------------------------------------------

inline std::string task_kind_name(surrogate::TaskKind kind) {
    return kind == surrogate::TaskKind::multiple_choice ? "multiple_choice"
                                                        : "free_form";
}

inline surrogate::TaskKind task_kind_from(const std::string& name, std::size_t line) {
    if (name == "multiple_choice") return surrogate::TaskKind::multiple_choice;
    if (name == "free_form") return surrogate::TaskKind::free_form;
    throw SchemaViolation("line " + std::to_string(line) +
                          ": field 'task_kind' must be multiple_choice or free_form");
}

inline std::string write_prompts(std::span<const surrogate::PromptRecord> records,
                                 const std::filesystem::path& path) {
    std::vector<ordered_json> lines;
    for (const auto& r : records) {
        if (r.id.empty() || r.prompt.empty() || r.reference.empty()) {
            throw SchemaViolation("prompts: id, prompt and reference must be nonempty");
        }
        ordered_json j;
        j["id"] = r.id;
        j["prompt"] = r.prompt;
        j["reference"] = r.reference;
        j["task_kind"] = task_kind_name(r.task_kind);
        lines.push_back(std::move(j));
    }
    return write_file_atomic(path, detail::render_jsonl(lines, "prompts"));
}

inline std::vector<surrogate::PromptRecord> read_prompts(
    const std::filesystem::path& path) {
    const auto lines = detail::parse_lines(read_file(path), "prompts");
    static constexpr const char* keys[] = {"id", "prompt", "reference", "task_kind"};
    std::vector<surrogate::PromptRecord> out;
    std::map<std::string, bool> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line = i + 2;
        detail::reject_unknown_keys(lines[i], keys, line);
        surrogate::PromptRecord r;
        r.id = detail::get_string(lines[i], "id", line);
        r.prompt = detail::get_string(lines[i], "prompt", line);
        r.reference = detail::get_string(lines[i], "reference", line);
        r.task_kind = task_kind_from(detail::get_string(lines[i], "task_kind", line), line);
        if (r.id.empty() || r.prompt.empty() || r.reference.empty()) {
            throw SchemaViolation("line " + std::to_string(line) +
                                  ": empty id, prompt or reference");
        }
        if (seen[r.id]) {
            throw SchemaViolation("line " + std::to_string(line) + ": duplicate id '" +
                                  r.id + "'");
        }
        seen[r.id] = true;
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// answers.jsonl  {prompt_id, sample_index, text, correct}
// ---------------------------------------------------------------------------

inline std::string write_answers(std::span<const surrogate::AnswerSample> records,
                                 const std::filesystem::path& path) {
    std::vector<ordered_json> lines;
    for (const auto& r : records) {
        if (r.correct != 0 && r.correct != 1) {
            throw SchemaViolation("answers: correct must be 0 or 1");
        }
        ordered_json j;
        j["prompt_id"] = r.prompt_id;
        j["sample_index"] = r.sample_index;
        j["text"] = r.text;
        j["correct"] = r.correct;
        lines.push_back(std::move(j));
    }
    return write_file_atomic(path, detail::render_jsonl(lines, "answers"));
}

inline std::vector<surrogate::AnswerSample> read_answers(
    const std::filesystem::path& path) {
    const auto lines = detail::parse_lines(read_file(path), "answers");
    static constexpr const char* keys[] = {"prompt_id", "sample_index", "text",
                                           "correct"};
    std::vector<surrogate::AnswerSample> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line = i + 2;
        detail::reject_unknown_keys(lines[i], keys, line);
        surrogate::AnswerSample r;
        r.prompt_id = detail::get_string(lines[i], "prompt_id", line);
        r.sample_index = detail::get_int(lines[i], "sample_index", line, 0, 1 << 20);
        r.text = detail::get_string(lines[i], "text", line);
        r.correct = detail::get_bit(lines[i], "correct", line);
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// surrogate.jsonl  {prompt_id, ensemble_size, kappa_s, realized_answer,
//                   realized_correct, realized_sample_index}
// ---------------------------------------------------------------------------

inline std::string write_surrogates(std::span<const surrogate::SurrogateRecord> records,
                                    const std::filesystem::path& path) {
    std::vector<ordered_json> lines;
    for (const auto& r : records) {
        ordered_json j;
        j["prompt_id"] = r.prompt_id;
        j["ensemble_size"] = r.ensemble_size;
        j["kappa_s"] = r.kappa_s;
        j["realized_answer"] = r.realized_answer;
        j["realized_correct"] = r.realized_correct;
        j["realized_sample_index"] = r.realized_sample_index;
        lines.push_back(std::move(j));
    }
    return write_file_atomic(path, detail::render_jsonl(lines, "surrogate"));
}

inline std::vector<surrogate::SurrogateRecord> read_surrogates(
    const std::filesystem::path& path) {
    const auto lines = detail::parse_lines(read_file(path), "surrogate");
    static constexpr const char* keys[] = {"prompt_id",       "ensemble_size",
                                           "kappa_s",         "realized_answer",
                                           "realized_correct", "realized_sample_index"};
    std::vector<surrogate::SurrogateRecord> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line = i + 2;
        detail::reject_unknown_keys(lines[i], keys, line);
        surrogate::SurrogateRecord r;
        r.prompt_id = detail::get_string(lines[i], "prompt_id", line);
        r.ensemble_size = detail::get_int(lines[i], "ensemble_size", line, 1, 1 << 20);
        r.kappa_s = detail::get_number(lines[i], "kappa_s", line, 0.0, 1.0);
        r.realized_answer = detail::get_string(lines[i], "realized_answer", line);
        r.realized_correct = detail::get_bit(lines[i], "realized_correct", line);
        r.realized_sample_index =
            detail::get_int(lines[i], "realized_sample_index", line, 0, 1 << 20);
        if ((r.kappa_s >= 0.5) != (r.realized_correct == 1)) {
            throw SchemaViolation("line " + std::to_string(line) +
                                  ": realized_correct contradicts kappa_s");
        }
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// confidences.jsonl  {prompt_id, sample_index, value, raw_text, valid}
// ---------------------------------------------------------------------------

inline std::string write_confidences(
    std::span<const preference::ConfidenceCandidate> records,
    const std::filesystem::path& path) {
    std::vector<ordered_json> lines;
    for (const auto& r : records) {
        ordered_json j;
        j["prompt_id"] = r.prompt_id;
        j["sample_index"] = r.sample_index;
        j["value"] = r.value;
        j["raw_text"] = r.raw_text;
        j["valid"] = r.valid ? 1 : 0;
        lines.push_back(std::move(j));
    }
    return write_file_atomic(path, detail::render_jsonl(lines, "confidences"));
}

inline std::vector<preference::ConfidenceCandidate> read_confidences(
    const std::filesystem::path& path) {
    const auto lines = detail::parse_lines(read_file(path), "confidences");
    static constexpr const char* keys[] = {"prompt_id", "sample_index", "value",
                                           "raw_text", "valid"};
    std::vector<preference::ConfidenceCandidate> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line = i + 2;
        detail::reject_unknown_keys(lines[i], keys, line);
        preference::ConfidenceCandidate r;
        r.prompt_id = detail::get_string(lines[i], "prompt_id", line);
        r.sample_index = detail::get_int(lines[i], "sample_index", line, 0, 1 << 20);
        r.value = detail::get_number(lines[i], "value", line, 0.0, 1.0);
        r.raw_text = detail::get_string(lines[i], "raw_text", line);
        r.valid = detail::get_bit(lines[i], "valid", line) == 1;
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// prefs.jsonl  {prompt_id, context, chosen_text, chosen_value, chosen_reward,
//               rejected_text, rejected_value, rejected_reward}
// ---------------------------------------------------------------------------

inline std::string write_prefs(std::span<const preference::PreferencePair> records,
                               const std::filesystem::path& path) {
    std::vector<ordered_json> lines;
    for (const auto& r : records) {
        if (!(r.chosen.reward > r.rejected.reward)) {
            throw SchemaViolation("prefs: chosen reward must exceed rejected reward");
        }
        ordered_json j;
        j["prompt_id"] = r.prompt_id;
        j["context"] = r.context;
        j["chosen_text"] = r.chosen.raw_text;
        j["chosen_value"] = r.chosen.value;
        j["chosen_reward"] = r.chosen.reward;
        j["rejected_text"] = r.rejected.raw_text;
        j["rejected_value"] = r.rejected.value;
        j["rejected_reward"] = r.rejected.reward;
        lines.push_back(std::move(j));
    }
    return write_file_atomic(path, detail::render_jsonl(lines, "prefs"));
}

inline std::vector<preference::PreferencePair> read_prefs(
    const std::filesystem::path& path) {
    const auto lines = detail::parse_lines(read_file(path), "prefs");
    static constexpr const char* keys[] = {"prompt_id",     "context",
                                           "chosen_text",   "chosen_value",
                                           "chosen_reward", "rejected_text",
                                           "rejected_value", "rejected_reward"};
    std::vector<preference::PreferencePair> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line = i + 2;
        detail::reject_unknown_keys(lines[i], keys, line);
        preference::PreferencePair r;
        r.prompt_id = detail::get_string(lines[i], "prompt_id", line);
        r.context = detail::get_string(lines[i], "context", line);
        r.chosen.prompt_id = r.prompt_id;
        r.chosen.raw_text = detail::get_string(lines[i], "chosen_text", line);
        r.chosen.value = detail::get_number(lines[i], "chosen_value", line, 0.0, 1.0);
        r.chosen.reward = detail::get_number(lines[i], "chosen_reward", line, -2.0, 2.0);
        r.rejected.prompt_id = r.prompt_id;
        r.rejected.raw_text = detail::get_string(lines[i], "rejected_text", line);
        r.rejected.value = detail::get_number(lines[i], "rejected_value", line, 0.0, 1.0);
        r.rejected.reward =
            detail::get_number(lines[i], "rejected_reward", line, -2.0, 2.0);
        r.reward_gap = r.chosen.reward - r.rejected.reward;
        if (!(r.reward_gap > 0.0)) {
            throw SchemaViolation("line " + std::to_string(line) +
                                  ": chosen reward must exceed rejected reward");
        }
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// eval_report.json
// ---------------------------------------------------------------------------

inline ordered_json eval_report_to_json(const metrics::EvalReport& r) {
    ordered_json j;
    j["n"] = r.n;
    j["accuracy"] = r.accuracy;
    j["ece"] = r.ece;
    j["bin_count"] = r.bin_count;
    if (r.spearman_defined) {
        j["spearman"] = r.spearman;
        j["spearman_p"] = r.spearman_p;
    } else {
        j["spearman"] = nullptr;
        j["spearman_p"] = nullptr;
    }
    j["spearman_defined"] = r.spearman_defined;
    j["spearman_p_method"] = r.spearman_p_method;
    j["aurc"] = r.aurc;
    j["e_aurc"] = r.e_aurc;
    j["risk_coverage"] = ordered_json::array();
    for (const auto& p : r.curve.points) {
        j["risk_coverage"].push_back({{"coverage", p.coverage}, {"risk", p.risk}});
    }
    return j;
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

enum class Stage { answers, surrogate, confidences, prefs, eval, simulate };

inline std::string stage_name(Stage stage) {
    switch (stage) {
        case Stage::answers: return "answers";
        case Stage::surrogate: return "surrogate";
        case Stage::confidences: return "confidences";
        case Stage::prefs: return "prefs";
        case Stage::eval: return "eval";
        case Stage::simulate: return "simulate";
    }
    return "unknown";
}

struct RunManifest {
    std::string run_id;
    std::string created_at;  // ISO-8601 UTC
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string stage;
    std::vector<std::pair<std::string, std::string>> input_digests;  // (path, digest)
    std::vector<std::pair<std::string, std::string>> output_digests;
};

inline std::string utc_now_iso8601() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Hash of the canonicalized (key-sorted) config document.
inline std::string config_hash(const nlohmann::json& config) {
    return sha256_hex(config.dump());
}

inline RunManifest make_manifest(Stage stage, const nlohmann::json& config,
                                 std::uint64_t seed) {
    RunManifest m;
    m.stage = stage_name(stage);
    m.config_hash = config_hash(config);
    m.seed = seed;
    m.run_id = m.stage + "-" + m.config_hash.substr(0, 12);
    m.created_at = utc_now_iso8601();
    return m;
}

inline std::string write_manifest(const RunManifest& m,
                                  const std::filesystem::path& path) {
    ordered_json j;
    j["run_id"] = m.run_id;
    j["created_at"] = m.created_at;
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    j["stage"] = m.stage;
    j["input_digests"] = ordered_json::array();
    for (const auto& [p, d] : m.input_digests) {
        j["input_digests"].push_back({{"path", p}, {"digest", d}});
    }
    j["output_digests"] = ordered_json::array();
    for (const auto& [p, d] : m.output_digests) {
        j["output_digests"].push_back({{"path", p}, {"digest", d}});
    }
    return write_file_atomic(path, j.dump(2) + "\n");
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation("manifest '" + path.string() + "': " + e.what());
    }
    RunManifest m;
    m.run_id = j.value("run_id", "");
    m.created_at = j.value("created_at", "");
    m.config_hash = j.value("config_hash", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.stage = j.value("stage", "");
    for (const auto& e : j.value("input_digests", ordered_json::array())) {
        m.input_digests.emplace_back(e.value("path", ""), e.value("digest", ""));
    }
    for (const auto& e : j.value("output_digests", ordered_json::array())) {
        m.output_digests.emplace_back(e.value("path", ""), e.value("digest", ""));
    }
    return m;
}

// Recomputes each recorded input digest and fails on any drift.
inline void verify_manifest_inputs(const RunManifest& m) {
    for (const auto& [path, digest] : m.input_digests) {
        const std::string current = file_digest(path);
        if (current != digest) {
            throw SchemaViolation("manifest input '" + path +
                                  "' changed since the recorded run");
        }
    }
}

}  // namespace confrank::store
