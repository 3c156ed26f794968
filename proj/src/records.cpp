#include "refaug/records.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "refaug/grading.hpp"

namespace refaug {
namespace {

template <typename E, std::size_t N>
std::string enum_to_string(E v, const std::array<std::string_view, N>& names, const char* what) {
    auto i = static_cast<std::size_t>(v);
    if (i >= N) throw Error(std::string("invalid ") + what + " value");
    return std::string(names[i]);
}

template <typename E, std::size_t N>
E enum_from_string(std::string_view s, const std::array<std::string_view, N>& names,
                   const char* what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<E>(i);
    }
    throw Error(std::string("unknown ") + what + ": '" + std::string(s) + "'");
}

constexpr std::array<std::string_view, 4> kSourceNames{"gsm8k", "math", "metamath", "synthetic"};
constexpr std::array<std::string_view, 2> kSplitNames{"train", "test"};
constexpr std::array<std::string_view, 4> kTechniqueNames{"answer_aug", "rephrase",
                                                          "self_verification", "fobar"};
constexpr std::array<std::string_view, 2> kFollowUpNames{"abstraction", "analogy"};
constexpr std::array<std::string_view, 6> kLineageNames{"standard", "refaug_tail", "refaug_front",
                                                        "qaug", "aaug", "metamath"};
constexpr std::array<std::string_view, 3> kVerdictNames{"correct", "incorrect", "no_answer"};
constexpr std::array<std::string_view, 3> kMethodNames{"numeric", "string", "mc_judge"};
constexpr std::array<std::string_view, 3> kFormatNames{"gsm8k_jsonl", "math_jsonl",
                                                       "toolkit_jsonl"};

std::string require_string(const ojson& j, const char* key) {
    if (!j.contains(key)) throw Error(std::string("missing field '") + key + "'");
    if (!j.at(key).is_string()) throw Error(std::string("field '") + key + "' is not a string");
    return j.at(key).get<std::string>();
}

}  // namespace

std::string to_string(Source v) { return enum_to_string(v, kSourceNames, "source"); }
std::string to_string(Split v) { return enum_to_string(v, kSplitNames, "split"); }
std::string to_string(Technique v) { return enum_to_string(v, kTechniqueNames, "technique"); }
std::string to_string(FollowUpKind v) { return enum_to_string(v, kFollowUpNames, "follow_up_kind"); }
std::string to_string(Lineage v) { return enum_to_string(v, kLineageNames, "lineage"); }
std::string to_string(Verdict v) { return enum_to_string(v, kVerdictNames, "verdict"); }
std::string to_string(GradeMethod v) { return enum_to_string(v, kMethodNames, "method"); }
std::string to_string(DatasetFormat v) { return enum_to_string(v, kFormatNames, "format"); }

Source source_from_string(std::string_view s) {
    return enum_from_string<Source>(s, kSourceNames, "source");
}
Split split_from_string(std::string_view s) {
    return enum_from_string<Split>(s, kSplitNames, "split");
}
Technique technique_from_string(std::string_view s) {
    return enum_from_string<Technique>(s, kTechniqueNames, "technique");
}
FollowUpKind follow_up_kind_from_string(std::string_view s) {
    return enum_from_string<FollowUpKind>(s, kFollowUpNames, "follow_up_kind");
}
Lineage lineage_from_string(std::string_view s) {
    return enum_from_string<Lineage>(s, kLineageNames, "lineage");
}
Verdict verdict_from_string(std::string_view s) {
    return enum_from_string<Verdict>(s, kVerdictNames, "verdict");
}
GradeMethod grade_method_from_string(std::string_view s) {
    return enum_from_string<GradeMethod>(s, kMethodNames, "method");
}
DatasetFormat dataset_format_from_string(std::string_view s) {
    return enum_from_string<DatasetFormat>(s, kFormatNames, "format");
}

std::string MathInstance::seed_id() const {
    auto pos = id.find("::");
    return pos == std::string::npos ? id : id.substr(0, pos);
}

void to_json(ojson& j, const MathInstance& r) {
    j = ojson{{"id", r.id},
              {"source", to_string(r.source)},
              {"split", to_string(r.split)},
              {"question", r.question},
              {"solution", r.solution},
              {"final_answer", r.final_answer},
              {"technique", r.technique ? ojson(to_string(*r.technique)) : ojson(nullptr)}};
}

void from_json(const ojson& j, MathInstance& r) {
    r.id = require_string(j, "id");
    r.source = source_from_string(require_string(j, "source"));
    r.split = split_from_string(require_string(j, "split"));
    r.question = require_string(j, "question");
    r.solution = require_string(j, "solution");
    r.final_answer = require_string(j, "final_answer");
    r.technique.reset();
    if (j.contains("technique") && !j.at("technique").is_null()) {
        r.technique = technique_from_string(j.at("technique").get<std::string>());
    }
}

void to_json(ojson& j, const ReflectiveSection& r) {
    j = ojson{{"id", r.id},
              {"seed_id", r.seed_id},
              {"alternative", r.alternative},
              {"follow_up_kind", to_string(r.follow_up_kind)},
              {"follow_up", r.follow_up},
              {"annotator", r.annotator},
              {"raw", r.raw}};
}

void from_json(const ojson& j, ReflectiveSection& r) {
    r.id = require_string(j, "id");
    r.seed_id = require_string(j, "seed_id");
    r.alternative = require_string(j, "alternative");
    r.follow_up_kind = follow_up_kind_from_string(require_string(j, "follow_up_kind"));
    r.follow_up = require_string(j, "follow_up");
    r.annotator = require_string(j, "annotator");
    r.raw = require_string(j, "raw");
}

void to_json(ojson& j, const TrainingSequence& r) {
    j = ojson{{"id", r.id},
              {"input", r.input},
              {"output", r.output},
              {"loss_boundary", r.loss_boundary},
              {"lineage", to_string(r.lineage)},
              {"token_estimate", r.token_estimate}};
}

void from_json(const ojson& j, TrainingSequence& r) {
    r.id = require_string(j, "id");
    r.input = require_string(j, "input");
    r.output = require_string(j, "output");
    r.loss_boundary = j.at("loss_boundary").get<int>();
    r.lineage = lineage_from_string(require_string(j, "lineage"));
    r.token_estimate = j.at("token_estimate").get<int>();
}

void to_json(ojson& j, const GradeResult& r) {
    j = ojson{{"id", r.id},
              {"extracted", r.extracted ? ojson(*r.extracted) : ojson(nullptr)},
              {"gold", r.gold},
              {"verdict", to_string(r.verdict)},
              {"method", to_string(r.method)}};
}

void from_json(const ojson& j, GradeResult& r) {
    r.id = require_string(j, "id");
    r.extracted.reset();
    if (j.contains("extracted") && !j.at("extracted").is_null()) {
        r.extracted = j.at("extracted").get<std::string>();
    }
    r.gold = require_string(j, "gold");
    r.verdict = verdict_from_string(require_string(j, "verdict"));
    r.method = grade_method_from_string(require_string(j, "method"));
    r.raw_generation.clear();
    r.truncated.clear();
}

void to_json(ojson& j, const LineageRecord& r) {
    j = ojson{{"id", r.id},
              {"seed_id", r.seed_id},
              {"prompt_hash", r.prompt_hash},
              {"model", r.model}};
}

void from_json(const ojson& j, LineageRecord& r) {
    r.id = require_string(j, "id");
    r.seed_id = require_string(j, "seed_id");
    r.prompt_hash = require_string(j, "prompt_hash");
    r.model = require_string(j, "model");
}

void to_json(ojson& j, const LineError& r) {
    j = ojson{{"line", r.line}, {"error", r.error}};
}

void from_json(const ojson& j, LineError& r) {
    r.line = j.at("line").get<int>();
    r.error = require_string(j, "error");
}

namespace detail {

std::vector<ojson> parse_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read file: " + path.string());
    std::vector<ojson> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        try {
            out.push_back(ojson::parse(line));
        } catch (const std::exception& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace detail

std::string extract_gold_answer(const std::string& solution, Source source) {
    if (source == Source::gsm8k) {
        static constexpr std::string_view marker = "#### ";
        auto pos = solution.rfind(marker);
        if (pos == std::string::npos) throw Error("no '#### ' answer marker in solution");
        auto tail = trim(std::string_view(solution).substr(pos + marker.size()));
        if (tail.empty()) throw Error("empty answer after '#### ' marker");
        return normalize_answer(tail);
    }
    if (source == Source::math) {
        static constexpr std::string_view marker = "\\boxed{";
        auto pos = solution.rfind(marker);
        if (pos == std::string::npos) throw Error("no \\boxed{...} group in solution");
        std::size_t i = pos + marker.size();
        int depth = 1;
        bool escaped = false;
        std::string content;
        for (; i < solution.size(); ++i) {
            char c = solution[i];
            if (escaped) {
                content.push_back(c);
                escaped = false;
                continue;
            }
            if (c == '\\') {
                content.push_back(c);
                escaped = true;
                continue;
            }
            if (c == '{') ++depth;
            if (c == '}') {
                --depth;
                if (depth == 0) return std::string(trim(content));
            }
            content.push_back(c);
        }
        throw Error("unbalanced braces in \\boxed{...} group");
    }
    throw Error("extract_gold_answer: source must be gsm8k or math");
}

namespace {

MathInstance parse_raw_record(const ojson& j, DatasetFormat format, Split split, int lineno) {
    MathInstance r;
    if (format == DatasetFormat::gsm8k_jsonl) {
        r.source = Source::gsm8k;
        r.question = require_string(j, "question");
        r.solution = require_string(j, "answer");
    } else {
        r.source = Source::math;
        r.question = require_string(j, "problem");
        r.solution = require_string(j, "solution");
    }
    r.split = split;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05d", lineno);
    r.id = to_string(r.source) + "-" + to_string(split) + "-" + buf;
    return r;
}

void validate_instance(const MathInstance& r) {
    if (r.id.empty()) throw Error("empty id");
    if (trim(r.question).empty()) throw Error("empty question");
    if (trim(r.solution).empty()) throw Error("empty solution");
    if (r.split == Split::train && r.final_answer.empty()) {
        throw Error("empty final_answer on a train record");
    }
}

}  // namespace

DatasetFile load_dataset(const std::filesystem::path& path, DatasetFormat format, Split split,
                         bool fail_fast) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read file: " + path.string());

    DatasetFile out;
    out.path = path.string();
    out.format = format;

    std::unordered_set<std::string> seen_ids;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        try {
            ojson j = ojson::parse(line);
            MathInstance rec;
            if (format == DatasetFormat::toolkit_jsonl) {
                rec = j.get<MathInstance>();
            } else {
                rec = parse_raw_record(j, format, split, lineno);
                try {
                    rec.final_answer = extract_gold_answer(rec.solution, rec.source);
                } catch (const Error& e) {
                    throw Error(std::string(e.what()) + " (id=" + rec.id + ")");
                }
            }
            validate_instance(rec);
            if (!seen_ids.insert(rec.id).second) throw Error("duplicate id '" + rec.id + "'");
            out.records.push_back(std::move(rec));
        } catch (const std::exception& e) {
            if (fail_fast) {
                throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
            out.errors.push_back({lineno, e.what()});
        }
    }
    return out;
}

}  // namespace refaug
