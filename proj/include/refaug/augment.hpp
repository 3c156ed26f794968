#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "refaug/gateway.hpp"
#include "refaug/prompt.hpp"
#include "refaug/records.hpp"

namespace refaug {

struct AnnotationParams {
    std::string endpoint = "annotator";
    double temperature = 0.7;
    double top_p = 1.0;
    int max_tokens = 2048;
};

/// Pieces recovered from an annotation completion. The follow-up kind is
/// whatever the header says; the parser never picks one itself.
struct ParsedReflection {
    std::string alternative;
    FollowUpKind kind = FollowUpKind::abstraction;
    std::string follow_up;
};

/// Parses "Alternative reasoning:" / "Follow-up (abstraction|analogy):"
/// blocks out of a completion. Case-insensitive on headers and tolerant of
/// surrounding markdown emphasis/heading marks. nullopt when either header
/// is missing or a block is empty.
std::optional<ParsedReflection> parse_reflection_completion(std::string_view raw);

class AnnotationError : public Error {
public:
    using Error::Error;
};

/// One reflective-section annotation via the expert endpoint. Re-samples
/// once on a parse failure, then throws AnnotationError.
ReflectiveSection annotate_reflection(const MathInstance& instance, Gateway& gateway,
                                      const PromptTemplate& prompt, const AnnotationParams& params);

/// One question-augmentation call: a single prompt yields a new question and
/// its solution. The product is a synthetic train instance whose id is
/// "<seed>::qaug<sample>"; its final answer is read from the solution's
/// terminal "The answer is" sentence.
MathInstance augment_question(const MathInstance& instance, Gateway& gateway,
                              const PromptTemplate& prompt, const AnnotationParams& params);

struct AugmentedAnswer {
    std::string solution;
    int attempts = 0;
    bool verified = false;
};

/// Re-samples a solution until its answer matches gold or max_attempts is
/// reached; on exhaustion the LAST sample is kept with verified=false.
AugmentedAnswer augment_answer(const MathInstance& instance, Gateway& gateway,
                               const PromptTemplate& prompt, const AnnotationParams& params,
                               int max_attempts = 5);

/// Uniform per-(seed, technique) selection from a tagged pool: `rounds`
/// distinct instances per pair (all of them when fewer exist), deterministic
/// under the rng seed. rounds=1 and rounds=2 are the 40k/80k constructions.
std::vector<MathInstance> sample_metamath(const std::vector<MathInstance>& pool, int rounds,
                                          std::uint64_t rng_seed);

struct AugmentFailure {
    std::string id;
    std::string error;
};

/// Batch drivers: bounded-parallel over instances through the gateway,
/// results in input order, failures collected per seed instance.
struct AnnotateBatchResult {
    std::vector<ReflectiveSection> sections;
    std::vector<AugmentFailure> failures;
    std::vector<LineageRecord> lineage;
};
AnnotateBatchResult annotate_reflections(const std::vector<MathInstance>& instances,
                                         Gateway& gateway, const PromptTemplate& prompt,
                                         const AnnotationParams& params);

struct QuestionAugBatchResult {
    std::vector<MathInstance> instances;
    std::vector<AugmentFailure> failures;
    std::vector<LineageRecord> lineage;
};
QuestionAugBatchResult augment_questions(const std::vector<MathInstance>& instances,
                                         Gateway& gateway, const PromptTemplate& prompt,
                                         const AnnotationParams& params);

struct AnswerAugBatchResult {
    std::vector<MathInstance> instances;  // seed question + re-sampled solution
    std::vector<AugmentedAnswer> details;
    std::vector<AugmentFailure> failures;
    std::vector<LineageRecord> lineage;
};
AnswerAugBatchResult augment_answers(const std::vector<MathInstance>& instances, Gateway& gateway,
                                     const PromptTemplate& prompt, const AnnotationParams& params,
                                     int max_attempts = 5);

}  // namespace refaug
