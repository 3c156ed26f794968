#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "refaug/util.hpp"

namespace refaug {

using ojson = nlohmann::ordered_json;

enum class Source { gsm8k, math, metamath, synthetic };
enum class Split { train, test };
enum class Technique { answer_aug, rephrase, self_verification, fobar };
enum class FollowUpKind { abstraction, analogy };
enum class Lineage { standard, refaug_tail, refaug_front, qaug, aaug, metamath };
enum class Verdict { correct, incorrect, no_answer };
enum class GradeMethod { numeric, string, mc_judge };

std::string to_string(Source v);
std::string to_string(Split v);
std::string to_string(Technique v);
std::string to_string(FollowUpKind v);
std::string to_string(Lineage v);
std::string to_string(Verdict v);
std::string to_string(GradeMethod v);

Source source_from_string(std::string_view s);
Split split_from_string(std::string_view s);
Technique technique_from_string(std::string_view s);
FollowUpKind follow_up_kind_from_string(std::string_view s);
Lineage lineage_from_string(std::string_view s);
Verdict verdict_from_string(std::string_view s);
GradeMethod grade_method_from_string(std::string_view s);

/// One math problem with its reference solution and canonical final answer.
struct MathInstance {
    std::string id;
    Source source = Source::gsm8k;
    Split split = Split::train;
    std::string question;
    std::string solution;
    std::string final_answer;
    std::optional<Technique> technique;

    bool operator==(const MathInstance&) const = default;

    /// ids of derived records use "<seed>::<suffix>"; the seed-question id
    /// is everything before the first "::" (the whole id when absent).
    std::string seed_id() const;
};

/// Annotated reflective section: an alternative solution plus a follow-up
/// that is either an abstraction or an analogy.
struct ReflectiveSection {
    std::string id;
    std::string seed_id;
    std::string alternative;
    FollowUpKind follow_up_kind = FollowUpKind::abstraction;
    std::string follow_up;
    std::string annotator;
    std::string raw;

    bool operator==(const ReflectiveSection&) const = default;
};

/// Rendered trainer-ready pair. `input` ends with the assistant marker and
/// `loss_boundary` equals its length: supervision covers all of `output`.
struct TrainingSequence {
    std::string id;
    std::string input;
    std::string output;
    int loss_boundary = 0;
    Lineage lineage = Lineage::standard;
    int token_estimate = 0;

    bool operator==(const TrainingSequence&) const = default;
};

struct GradeResult {
    std::string id;
    std::optional<std::string> extracted;
    std::string gold;
    Verdict verdict = Verdict::no_answer;
    GradeMethod method = GradeMethod::numeric;

    // Not serialized; carried for transcript logs and error analysis.
    std::string raw_generation;
    std::string truncated;

    bool operator==(const GradeResult& o) const {
        return id == o.id && extracted == o.extracted && gold == o.gold &&
               verdict == o.verdict && method == o.method;
    }
};

/// Provenance of a synthetic record, written as a sidecar next to the data.
struct LineageRecord {
    std::string id;
    std::string seed_id;
    std::string prompt_hash;
    std::string model;

    bool operator==(const LineageRecord&) const = default;
};

struct LineError {
    int line = 0;
    std::string error;

    bool operator==(const LineError&) const = default;
};

void to_json(ojson& j, const MathInstance& r);
void from_json(const ojson& j, MathInstance& r);
void to_json(ojson& j, const ReflectiveSection& r);
void from_json(const ojson& j, ReflectiveSection& r);
void to_json(ojson& j, const TrainingSequence& r);
void from_json(const ojson& j, TrainingSequence& r);
void to_json(ojson& j, const GradeResult& r);
void from_json(const ojson& j, GradeResult& r);
void to_json(ojson& j, const LineageRecord& r);
void from_json(const ojson& j, LineageRecord& r);
void to_json(ojson& j, const LineError& r);
void from_json(const ojson& j, LineError& r);

enum class DatasetFormat { gsm8k_jsonl, math_jsonl, toolkit_jsonl };
std::string to_string(DatasetFormat v);
DatasetFormat dataset_format_from_string(std::string_view s);

struct DatasetFile {
    std::string path;
    DatasetFormat format = DatasetFormat::toolkit_jsonl;
    std::vector<MathInstance> records;
    std::vector<LineError> errors;  // only populated when fail_fast is off
};

/// Loads a line-delimited dataset. Raw gsm8k/math records get generated ids
/// ("<source>-<split>-<line#>") and their final answer extracted from the
/// solution. With fail_fast (the default) the first malformed line throws;
/// otherwise bad lines are collected into `errors` and skipped.
DatasetFile load_dataset(const std::filesystem::path& path, DatasetFormat format,
                         Split split = Split::train, bool fail_fast = true);

/// gsm8k: text after the final "#### " marker, normalized.
/// math: contents of the last \boxed{...} group (brace-balanced), verbatim.
std::string extract_gold_answer(const std::string& solution, Source source);

template <typename T>
void save_records(const std::vector<T>& records, const std::filesystem::path& path) {
    std::string buf;
    for (const T& r : records) {
        ojson j = r;
        buf += j.dump();
        buf += '\n';
    }
    write_text_file(path, buf);
}

namespace detail {
std::vector<ojson> parse_jsonl(const std::filesystem::path& path);
}

template <typename T>
std::vector<T> load_records(const std::filesystem::path& path) {
    std::vector<T> out;
    int line = 0;
    for (const ojson& j : detail::parse_jsonl(path)) {
        ++line;
        try {
            out.push_back(j.get<T>());
        } catch (const std::exception& e) {
            throw Error(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace refaug
