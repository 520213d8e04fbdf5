#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "confrank/errors.hpp"

// Prompt-level reliability estimation: grading sampled answers against the
// reference, the ensemble mean kappa_s, and realized-answer selection under
// the majority-correctness regime.

namespace confrank::surrogate {

enum class TaskKind { multiple_choice, free_form };

struct PromptRecord {
    std::string id;
    std::string prompt;
    std::string reference;
    TaskKind task_kind = TaskKind::multiple_choice;
};

struct AnswerSample {
    std::string prompt_id;
    int sample_index = 0;
    std::string text;
    int correct = 0;
};

struct SurrogateRecord {
    std::string prompt_id;
    int ensemble_size = 0;
    double kappa_s = 0.0;
    std::string realized_answer;
    int realized_correct = 0;
    int realized_sample_index = 0;
};

namespace detail {

// lowercase, trim, collapse whitespace, strip trailing punctuation
inline std::string normalize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char ch : text) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::isspace(u)) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(u)));
    }
    while (!out.empty()) {
        const char last = out.back();
        if (last == '.' || last == ',' || last == '!' || last == '?' ||
            last == ';' || last == ':') {
            out.pop_back();
        } else {
            break;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

inline bool is_option_letter(char ch) { return ch >= 'a' && ch <= 'e'; }

// First standalone A-E token in already-normalized text, or 0 if none.
inline char extract_option_letter(const std::string& normalized) {
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        if (!is_option_letter(normalized[i])) continue;
        const bool left_ok =
            i == 0 || !std::isalnum(static_cast<unsigned char>(normalized[i - 1]));
        const bool right_ok =
            i + 1 == normalized.size() ||
            !std::isalnum(static_cast<unsigned char>(normalized[i + 1]));
        if (left_ok && right_ok) return normalized[i];
    }
    return 0;
}

// Text after the last "answer:" marker, if present.
inline std::string_view final_answer_span(std::string_view text) {
    std::string lowered(text);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    const auto pos = lowered.rfind("answer:");
    if (pos == std::string::npos) return text;
    return text.substr(pos + 7);
}

}  // namespace detail

struct Graded {
    int correct = 0;
    bool parse_warning = false;  // multiple-choice letter was unextractable
};

// Task-specific correctness. Multiple choice compares the first standalone
// option letter (A-E) against the reference, falling back to normalized exact
// match; an unextractable letter grades as incorrect with a warning instead
// of aborting the batch. Free form compares the normalized final-answer span.
inline Graded grade(std::string_view answer, std::string_view reference,
                    TaskKind kind) {
    if (answer.empty() || reference.empty()) {
        throw InvalidInput("grade: empty answer or reference");
    }
    Graded result;
    if (kind == TaskKind::multiple_choice) {
        const std::string ans = detail::normalize(answer);
        const std::string ref = detail::normalize(reference);
        const char letter = detail::extract_option_letter(ans);
        if (ref.size() == 1 && detail::is_option_letter(ref[0])) {
            if (letter != 0) {
                result.correct = letter == ref[0] ? 1 : 0;
            } else {
                result.correct = ans == ref ? 1 : 0;
                result.parse_warning = true;
            }
        } else {
            result.correct = ans == ref ? 1 : 0;
            if (letter == 0) result.parse_warning = true;
        }
    } else {
        const std::string span = detail::normalize(detail::final_answer_span(answer));
        result.correct = span == detail::normalize(reference) ? 1 : 0;
    }
    return result;
}

inline int correctness(std::string_view answer, std::string_view reference,
                       TaskKind kind) {
    return grade(answer, reference, kind).correct;
}

// kappa_s: arithmetic mean of the correctness bits of one prompt's ensemble.
inline double kappa_s(std::span<const AnswerSample> samples) {
    if (samples.empty()) throw InvalidInput("kappa_s: empty sample list");
    std::size_t hits = 0;
    for (const auto& s : samples) {
        if (s.prompt_id != samples.front().prompt_id) {
            throw InvalidInput("kappa_s: mixed prompt ids");
        }
        if (s.correct != 0 && s.correct != 1) {
            throw InvalidInput("kappa_s: correctness must be 0 or 1");
        }
        hits += static_cast<std::size_t>(s.correct);
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

struct Realized {
    std::string text;
    int correct = 0;
    int sample_index = 0;
};

// kappa >= 1/2 selects the lowest-index correct sample, otherwise the
// lowest-index incorrect sample.
inline Realized select_realized(std::span<const AnswerSample> samples,
                                double kappa) {
    if (samples.empty()) throw InvalidInput("select_realized: empty sample list");
    const int needed = kappa >= 0.5 ? 1 : 0;
    const AnswerSample* best = nullptr;
    for (const auto& s : samples) {
        if (s.correct != needed) continue;
        if (best == nullptr || s.sample_index < best->sample_index) best = &s;
    }
    if (best == nullptr) {
        throw InconsistentSurrogate(
            "select_realized: no sample with the required correctness state");
    }
    return {best->text, best->correct, best->sample_index};
}

// One SurrogateRecord per prompt, in input prompt order. Every prompt must
// have exactly ensemble_size samples.
inline std::vector<SurrogateRecord> build_surrogate_dataset(
    std::span<const PromptRecord> prompts, std::span<const AnswerSample> answers,
    int ensemble_size) {
    if (ensemble_size < 1) {
        throw InvalidInput("build_surrogate_dataset: ensemble_size must be >= 1");
    }
    std::map<std::string, std::vector<AnswerSample>> by_prompt;
    for (const auto& a : answers) by_prompt[a.prompt_id].push_back(a);

    std::vector<SurrogateRecord> records;
    records.reserve(prompts.size());
    for (const auto& p : prompts) {
        const auto it = by_prompt.find(p.id);
        const std::size_t have = it == by_prompt.end() ? 0 : it->second.size();
        if (have != static_cast<std::size_t>(ensemble_size)) {
            throw SchemaViolation("build_surrogate_dataset: prompt '" + p.id +
                                  "' has " + std::to_string(have) + " samples, expected " +
                                  std::to_string(ensemble_size));
        }
        std::vector<int> seen;
        for (const auto& s : it->second) {
            if (std::find(seen.begin(), seen.end(), s.sample_index) != seen.end()) {
                throw SchemaViolation("build_surrogate_dataset: prompt '" + p.id +
                                      "' repeats sample_index " +
                                      std::to_string(s.sample_index));
            }
            seen.push_back(s.sample_index);
        }
        const double kappa = kappa_s(it->second);
        const Realized realized = select_realized(it->second, kappa);
        records.push_back({p.id, ensemble_size, kappa, realized.text,
                           realized.correct, realized.sample_index});
        by_prompt.erase(it);
    }
    if (!by_prompt.empty()) {
        throw SchemaViolation("build_surrogate_dataset: answers reference unknown prompt '" +
                              by_prompt.begin()->first + "'");
    }
    return records;
}

}  // namespace confrank::surrogate
