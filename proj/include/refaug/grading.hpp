#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refaug/records.hpp"

namespace refaug {

class Gateway;
struct PromptTemplate;

/// Longest prefix of `text` that does not contain `stop`; identity when the
/// stop string is absent. Mirrors inference-engine termination-string
/// semantics, so graders see exactly what an early-stopped generation emits.
std::string truncate_at_stop(std::string_view text, std::string_view stop = "Reflection:");

/// Pulls the predicted answer out of a generation: the text after the LAST
/// "The answer is" (case-insensitive) up to sentence end. Falls back to the
/// last number-like or \boxed token; nullopt when nothing qualifies.
std::optional<std::string> extract_prediction(std::string_view text);

/// Canonical answer form: trims, drops '$' and \boxed{}, removes thousands
/// separators, reduces numeric fractions (incl. \frac{a}{b}) to p/q, turns
/// x% into x/100, strips trailing decimal zeros. Non-numeric strings are
/// lowercased with whitespace collapsed.
std::string normalize_answer(std::string_view s);

/// Exact-match equivalence: equal normalized strings, or both parse as
/// rationals/decimals that are equal under exact big-integer arithmetic.
bool answers_equal(std::string_view a, std::string_view b);

/// True when the normalized form parses as an exact rational (integer,
/// decimal, or p/q). Used to pick the grading method label.
bool is_numeric_answer(std::string_view s);

/// Full grading of one generation against gold: truncate, extract, compare.
GradeResult grade_generation(std::string id, std::string_view raw_generation,
                             std::string_view gold, std::string_view stop = "Reflection:");

struct McOption {
    std::string label;
    std::string text;
};

/// Multiple-choice grading. Returns the matched option label, or nullopt if
/// the prediction cannot be matched (counts as incorrect). A prediction that
/// already names a label short-circuits without a judge call; anything else
/// goes to the judge endpoint, retried once on an unparsable reply.
std::optional<std::string> grade_mc(std::string_view prediction, const std::vector<McOption>& options,
                                    Gateway& gateway, const std::string& judge_endpoint,
                                    const PromptTemplate& judge_prompt);

struct ScoreSummary {
    int total = 0;
    int correct = 0;
    int incorrect = 0;
    int no_answer = 0;
    double accuracy = 0.0;
    // source label -> {correct, total}; filled when source_of is given
    std::map<std::string, std::pair<int, int>> by_source;
};

ScoreSummary score(const std::vector<GradeResult>& results,
                   const std::function<std::string(const GradeResult&)>& source_of = {});

}  // namespace refaug
