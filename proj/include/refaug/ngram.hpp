#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "refaug/records.hpp"

namespace refaug {

/// Overlap tokenization: lowercase, spaces inserted around punctuation,
/// split on whitespace. Punctuation marks come out as their own tokens.
std::vector<std::string> ngram_tokenize(std::string_view text);

/// All distinct windows of n consecutive tokens, space-joined. Empty when
/// the text has fewer than n tokens.
std::set<std::string> ngram_set(std::string_view text, int n);

struct Doc {
    std::string id;
    std::string text;
};

struct OverlapHit {
    std::string target_id;
    std::vector<std::string> source_ids;  // sorted, deduplicated
    std::string shared_ngram;             // leftmost overlapping window of the target
};

struct OverlapReport {
    std::string source_label;
    std::string target_label;
    int n = 0;
    int hit_count = 0;  // distinct target instances sharing >= 1 n-gram
    std::vector<OverlapHit> hits;
};

void to_json(ojson& j, const OverlapHit& h);
void to_json(ojson& j, const OverlapReport& r);

/// Hashed-index overlap scan with raw-string confirmation on every candidate
/// hit, so hash collisions can never fabricate a hit. Equivalent to the
/// naive all-pairs n-gram set intersection.
OverlapReport overlap(const std::vector<Doc>& sources, const std::vector<Doc>& targets, int n,
                      std::string source_label = "source", std::string target_label = "target");

struct ContaminationTable {
    OverlapReport question_row;  // train question -> test question, n_question
    OverlapReport answer_row;    // train answer   -> test answer,   n_answer
    OverlapReport refaug_row;    // reflective sections -> test answer, n_answer
    bool refaug_subset_of_answer = false;
};

ojson contamination_summary(const ContaminationTable& table);

/// The three-row check: question/question at n_question, answer/answer at
/// n_answer, reflective sections/answer at n_answer, plus whether every
/// reflective-row hit was already an answer-row hit.
ContaminationTable run_contamination_protocol(const DatasetFile& train, const DatasetFile& test,
                                              const std::vector<ReflectiveSection>& refaug,
                                              int n_question = 20, int n_answer = 30);

}  // namespace refaug
