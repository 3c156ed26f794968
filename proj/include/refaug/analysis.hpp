#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "refaug/gateway.hpp"
#include "refaug/prompt.hpp"
#include "refaug/records.hpp"

namespace refaug {

enum class ErrorLabel { reasoning, calculation, both, unclassified };
std::string to_string(ErrorLabel v);

/// Counts follow the published convention: `reasoning` and `calculation`
/// each include solutions with both error kinds, so
/// total_wrong = reasoning + calculation - both.
struct ErrorBreakdown {
    int reasoning = 0;
    int calculation = 0;
    int both = 0;
    int total_wrong = 0;
    int unclassified = 0;

    /// Recovers `both` from marginal counts via inclusion-exclusion.
    static ErrorBreakdown from_marginals(int reasoning, int calculation, int total_wrong);
};

void to_json(ojson& j, const ErrorBreakdown& b);

struct FailureCase {
    std::string id;
    std::string question;
    std::string solution;   // the model's wrong solution
    std::string gold_path;  // reference reasoning path
};

struct ClassifiedFailure {
    std::string id;
    ErrorLabel label = ErrorLabel::unclassified;
};

struct ErrorClassification {
    ErrorBreakdown breakdown;
    std::vector<ClassifiedFailure> labels;
};

/// One judge call per failure (retried once on an unparsable label); labels
/// outside {REASONING, CALCULATION, BOTH} after the retry become
/// `unclassified` and are excluded from the breakdown counts.
ErrorClassification classify_errors(const std::vector<FailureCase>& failures, Gateway& gateway,
                                    const std::string& judge_endpoint,
                                    const PromptTemplate& judge_prompt);

using TokenCounter = std::function<int(std::string_view)>;

struct LengthStats {
    std::optional<double> mean_train_tokens;
    std::optional<double> mean_test_tokens;
    std::string counter_id;
};

void to_json(ojson& j, const LengthStats& s);

double mean_token_count(const std::vector<std::string>& texts, const TokenCounter& counter);

/// Mean output tokens of a training file / mean truncated-generation tokens
/// of a test run. Counter identity is recorded because absolute numbers are
/// tokenizer-dependent; the default counts whitespace tokens.
LengthStats token_stats(const std::vector<TrainingSequence>& sequences,
                        const TokenCounter& counter = {}, std::string counter_id = "whitespace");
LengthStats token_stats(const std::vector<GradeResult>& results, const TokenCounter& counter = {},
                        std::string counter_id = "whitespace");

/// One metrics document, as produced by eval/analyze commands or transcribed
/// from an external reference.
struct MetricsDoc {
    std::string run;
    std::string kind;
    ojson metrics;  // flat map metric name -> value
};

void to_json(ojson& j, const MetricsDoc& d);
void from_json(const ojson& j, MetricsDoc& d);

/// Merges metrics documents into one summary keyed by run. The same metric
/// reported twice for one run with different values is an error; absent
/// metrics stay absent.
ojson merge_metrics(const std::vector<MetricsDoc>& docs);

/// Aligned-column text rendering of a merged summary. Values are printed
/// exactly as ingested (shortest round-trip formatting).
std::string render_report_table(const ojson& summary);

}  // namespace refaug
