#include "refaug/augment.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <random>

#include "refaug/grading.hpp"
#include "refaug/util.hpp"

namespace refaug {
namespace {

/// Strips whitespace plus markdown emphasis/heading runs from block edges.
std::string trim_block(std::string_view s) {
    auto is_markup = [](char c) { return c == '*' || c == '#' || c == '_' || c == '`'; };
    s = trim(s);
    while (!s.empty() && is_markup(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_markup(s.back())) s.remove_suffix(1);
    return std::string(trim(s));
}

ChatRequest annotation_request(const std::string& endpoint, std::string prompt,
                               const AnnotationParams& params, int sample_index) {
    ChatRequest request;
    request.endpoint = endpoint;
    request.messages = {{Role::user, std::move(prompt)}};
    request.decoding.temperature = params.temperature;
    request.decoding.top_p = params.top_p;
    request.decoding.max_tokens = params.max_tokens;
    request.sample_index = sample_index;
    return request;
}

/// Case-insensitive search for a labelled section header; returns the
/// position right after its colon.
std::optional<std::size_t> find_header_end(const std::string& lower, std::string_view label,
                                           std::size_t from) {
    auto pos = lower.find(label, from);
    if (pos == std::string::npos) return std::nullopt;
    auto colon = lower.find(':', pos + label.size());
    if (colon == std::string::npos) return std::nullopt;
    return colon + 1;
}

}  // namespace

std::optional<ParsedReflection> parse_reflection_completion(std::string_view raw) {
    std::string lower = to_lower(raw);

    auto alt_pos = lower.find("alternative reasoning");
    if (alt_pos == std::string::npos) return std::nullopt;
    auto alt_colon = lower.find(':', alt_pos);
    if (alt_colon == std::string::npos) return std::nullopt;

    auto fu_pos = lower.find("follow-up", alt_colon);
    if (fu_pos == std::string::npos) fu_pos = lower.find("follow up", alt_colon);
    if (fu_pos == std::string::npos) return std::nullopt;
    auto fu_colon = lower.find(':', fu_pos);
    if (fu_colon == std::string::npos) return std::nullopt;

    std::string_view header = std::string_view(lower).substr(fu_pos, fu_colon - fu_pos);
    ParsedReflection parsed;
    bool has_abstraction = header.find("abstraction") != std::string_view::npos;
    bool has_analogy = header.find("analogy") != std::string_view::npos;
    if (has_abstraction == has_analogy) return std::nullopt;  // neither, or ambiguous
    parsed.kind = has_abstraction ? FollowUpKind::abstraction : FollowUpKind::analogy;

    parsed.alternative = trim_block(raw.substr(alt_colon + 1, fu_pos - alt_colon - 1));
    parsed.follow_up = trim_block(raw.substr(fu_colon + 1));
    if (parsed.alternative.empty() || parsed.follow_up.empty()) return std::nullopt;
    return parsed;
}

ReflectiveSection annotate_reflection(const MathInstance& instance, Gateway& gateway,
                                      const PromptTemplate& prompt, const AnnotationParams& params) {
    if (trim(instance.question).empty() || trim(instance.solution).empty()) {
        throw AnnotationError("instance '" + instance.id + "' lacks question or solution");
    }
    std::string filled =
        prompt.fill({{"question", instance.question}, {"solution", instance.solution}});

    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatResponse response =
            gateway.chat(annotation_request(params.endpoint, filled, params, attempt));
        if (auto parsed = parse_reflection_completion(response.text)) {
            ReflectiveSection section;
            section.id = instance.id + "::reflection";
            section.seed_id = instance.id;
            section.alternative = parsed->alternative;
            section.follow_up_kind = parsed->kind;
            section.follow_up = parsed->follow_up;
            section.annotator = gateway.endpoint(params.endpoint).model;
            section.raw = response.text;
            return section;
        }
    }
    throw AnnotationError("instance '" + instance.id +
                          "': completion missing required section headers after one re-sample");
}

MathInstance augment_question(const MathInstance& instance, Gateway& gateway,
                              const PromptTemplate& prompt, const AnnotationParams& params) {
    if (instance.split != Split::train) {
        throw AnnotationError("instance '" + instance.id + "' is not from the train split");
    }
    std::string filled = prompt.fill({{"question", instance.question}});

    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatResponse response =
            gateway.chat(annotation_request(params.endpoint, filled, params, attempt));
        std::string lower = to_lower(response.text);
        auto q_end = find_header_end(lower, "new question", 0);
        if (!q_end) continue;
        auto s_pos = lower.find("solution", *q_end);
        if (s_pos == std::string::npos) continue;
        auto s_end = find_header_end(lower, "solution", *q_end);
        if (!s_end) continue;

        std::string question = trim_block(response.text.substr(*q_end, s_pos - *q_end));
        std::string solution = trim_block(response.text.substr(*s_end));
        auto answer = extract_prediction(solution);
        if (question.empty() || solution.empty() || !answer) continue;

        MathInstance product;
        product.id = instance.id + "::qaug";
        product.source = Source::synthetic;
        product.split = Split::train;
        product.question = question;
        product.solution = solution;
        product.final_answer = normalize_answer(*answer);
        return product;
    }
    throw AnnotationError("instance '" + instance.id +
                          "': completion missing question/solution delimiters after one re-sample");
}

AugmentedAnswer augment_answer(const MathInstance& instance, Gateway& gateway,
                               const PromptTemplate& prompt, const AnnotationParams& params,
                               int max_attempts) {
    if (instance.final_answer.empty()) {
        throw AnnotationError("instance '" + instance.id + "' lacks a gold final answer");
    }
    if (max_attempts < 1) throw Error("augment_answer: max_attempts must be >= 1");
    std::string filled = prompt.fill({{"question", instance.question}});

    AugmentedAnswer result;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        ChatResponse response =
            gateway.chat(annotation_request(params.endpoint, filled, params, attempt - 1));
        result.solution = response.text;
        result.attempts = attempt;
        auto answer = extract_prediction(response.text);
        result.verified = answer && answers_equal(*answer, instance.final_answer);
        if (result.verified) return result;
    }
    return result;  // last sample retained, verified=false
}

std::vector<MathInstance> sample_metamath(const std::vector<MathInstance>& pool, int rounds,
                                          std::uint64_t rng_seed) {
    if (rounds < 1) throw Error("sample_metamath: rounds must be >= 1");

    std::vector<std::string> seed_order;
    std::map<std::string, std::array<std::vector<std::size_t>, 4>> groups;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const MathInstance& inst = pool[i];
        if (!inst.technique) {
            throw Error("sample_metamath: instance '" + inst.id + "' has no technique tag");
        }
        std::string seed = inst.seed_id();
        if (!groups.contains(seed)) seed_order.push_back(seed);
        groups[seed][static_cast<std::size_t>(*inst.technique)].push_back(i);
    }

    std::mt19937_64 rng(rng_seed);
    std::vector<MathInstance> selected;
    for (const std::string& seed : seed_order) {
        for (const auto& candidates : groups[seed]) {
            if (candidates.empty()) continue;
            std::vector<std::size_t> chosen;
            std::sample(candidates.begin(), candidates.end(), std::back_inserter(chosen),
                        static_cast<std::size_t>(rounds), rng);
            for (std::size_t idx : chosen) selected.push_back(pool[idx]);
        }
    }
    return selected;
}

AnnotateBatchResult annotate_reflections(const std::vector<MathInstance>& instances,
                                         Gateway& gateway, const PromptTemplate& prompt,
                                         const AnnotationParams& params) {
    std::vector<std::optional<ReflectiveSection>> slots(instances.size());
    std::vector<std::optional<AugmentFailure>> errors(instances.size());
    parallel_for(instances.size(), static_cast<std::size_t>(gateway.parallelism()),
                 [&](std::size_t i) {
                     try {
                         slots[i] = annotate_reflection(instances[i], gateway, prompt, params);
                     } catch (const std::exception& e) {
                         errors[i] = AugmentFailure{instances[i].id, e.what()};
                     }
                 });

    AnnotateBatchResult result;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (slots[i]) {
            result.lineage.push_back(
                {slots[i]->id, slots[i]->seed_id, prompt.hash(), slots[i]->annotator});
            result.sections.push_back(std::move(*slots[i]));
        } else if (errors[i]) {
            result.failures.push_back(std::move(*errors[i]));
        }
    }
    return result;
}

QuestionAugBatchResult augment_questions(const std::vector<MathInstance>& instances,
                                         Gateway& gateway, const PromptTemplate& prompt,
                                         const AnnotationParams& params) {
    std::vector<std::optional<MathInstance>> slots(instances.size());
    std::vector<std::optional<AugmentFailure>> errors(instances.size());
    const std::string model = gateway.endpoint(params.endpoint).model;
    parallel_for(instances.size(), static_cast<std::size_t>(gateway.parallelism()),
                 [&](std::size_t i) {
                     try {
                         slots[i] = augment_question(instances[i], gateway, prompt, params);
                     } catch (const std::exception& e) {
                         errors[i] = AugmentFailure{instances[i].id, e.what()};
                     }
                 });

    QuestionAugBatchResult result;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (slots[i]) {
            result.lineage.push_back({slots[i]->id, instances[i].id, prompt.hash(), model});
            result.instances.push_back(std::move(*slots[i]));
        } else if (errors[i]) {
            result.failures.push_back(std::move(*errors[i]));
        }
    }
    return result;
}

AnswerAugBatchResult augment_answers(const std::vector<MathInstance>& instances, Gateway& gateway,
                                     const PromptTemplate& prompt, const AnnotationParams& params,
                                     int max_attempts) {
    std::vector<std::optional<AugmentedAnswer>> slots(instances.size());
    std::vector<std::optional<AugmentFailure>> errors(instances.size());
    const std::string model = gateway.endpoint(params.endpoint).model;
    parallel_for(instances.size(), static_cast<std::size_t>(gateway.parallelism()),
                 [&](std::size_t i) {
                     try {
                         slots[i] =
                             augment_answer(instances[i], gateway, prompt, params, max_attempts);
                     } catch (const std::exception& e) {
                         errors[i] = AugmentFailure{instances[i].id, e.what()};
                     }
                 });

    AnswerAugBatchResult result;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (slots[i]) {
            MathInstance product;
            product.id = instances[i].id + "::aaug";
            product.source = Source::synthetic;
            product.split = Split::train;
            product.question = instances[i].question;
            product.solution = slots[i]->solution;
            product.final_answer = instances[i].final_answer;
            result.lineage.push_back({product.id, instances[i].id, prompt.hash(), model});
            result.instances.push_back(std::move(product));
            result.details.push_back(std::move(*slots[i]));
        } else if (errors[i]) {
            result.failures.push_back(std::move(*errors[i]));
        }
    }
    return result;
}

}  // namespace refaug
