#include "refaug/ngram.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "refaug/util.hpp"

namespace refaug {
namespace {

std::string join_window(const std::vector<std::string>& tokens, std::size_t start, int n) {
    std::string out;
    for (int k = 0; k < n; ++k) {
        if (k) out.push_back(' ');
        out += tokens[start + k];
    }
    return out;
}

struct IndexEntry {
    std::string gram;
    std::vector<std::string> source_ids;
};

}  // namespace

std::vector<std::string> ngram_tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (char raw : text) {
        unsigned char c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            flush();
        } else if (c < 128 && std::ispunct(c)) {
            flush();
            tokens.emplace_back(1, raw);
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return tokens;
}

std::set<std::string> ngram_set(std::string_view text, int n) {
    if (n < 1) throw Error("ngram_set: n must be >= 1");
    std::set<std::string> grams;
    auto tokens = ngram_tokenize(text);
    if (tokens.size() < static_cast<std::size_t>(n)) return grams;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        grams.insert(join_window(tokens, i, n));
    }
    return grams;
}

OverlapReport overlap(const std::vector<Doc>& sources, const std::vector<Doc>& targets, int n,
                      std::string source_label, std::string target_label) {
    if (n < 1) throw Error("overlap: n must be >= 1");

    // Index: gram hash -> entries carrying the raw gram for confirmation.
    std::unordered_map<std::uint64_t, std::vector<IndexEntry>> index;
    std::hash<std::string> hasher;
    for (const Doc& src : sources) {
        auto tokens = ngram_tokenize(src.text);
        if (tokens.size() < static_cast<std::size_t>(n)) continue;
        std::unordered_set<std::string> seen;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            std::string gram = join_window(tokens, i, n);
            if (!seen.insert(gram).second) continue;
            auto& bucket = index[hasher(gram)];
            auto it = std::find_if(bucket.begin(), bucket.end(),
                                   [&](const IndexEntry& e) { return e.gram == gram; });
            if (it == bucket.end()) {
                bucket.push_back({std::move(gram), {src.id}});
            } else if (it->source_ids.empty() || it->source_ids.back() != src.id) {
                it->source_ids.push_back(src.id);
            }
        }
    }

    std::vector<std::optional<OverlapHit>> hits_by_target(targets.size());
    parallel_for(targets.size(), std::thread::hardware_concurrency(), [&](std::size_t t) {
        const Doc& target = targets[t];
        auto tokens = ngram_tokenize(target.text);
        if (tokens.size() < static_cast<std::size_t>(n)) return;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            std::string gram = join_window(tokens, i, n);
            auto bucket = index.find(hasher(gram));
            if (bucket == index.end()) continue;
            for (const IndexEntry& entry : bucket->second) {
                if (entry.gram != gram) continue;  // hash collision, not a hit
                OverlapHit hit;
                hit.target_id = target.id;
                hit.source_ids = entry.source_ids;
                std::sort(hit.source_ids.begin(), hit.source_ids.end());
                hit.source_ids.erase(std::unique(hit.source_ids.begin(), hit.source_ids.end()),
                                     hit.source_ids.end());
                hit.shared_ngram = gram;
                hits_by_target[t] = std::move(hit);
                return;
            }
        }
    });

    OverlapReport report;
    report.source_label = std::move(source_label);
    report.target_label = std::move(target_label);
    report.n = n;
    for (auto& maybe_hit : hits_by_target) {
        if (maybe_hit) report.hits.push_back(std::move(*maybe_hit));
    }
    report.hit_count = static_cast<int>(report.hits.size());
    return report;
}

void to_json(ojson& j, const OverlapHit& h) {
    j = ojson{{"target_id", h.target_id},
              {"source_ids", h.source_ids},
              {"shared_ngram", h.shared_ngram}};
}

void to_json(ojson& j, const OverlapReport& r) {
    j = ojson{{"source", r.source_label},
              {"target", r.target_label},
              {"n", r.n},
              {"hit_count", r.hit_count},
              {"hits", r.hits}};
}

ojson contamination_summary(const ContaminationTable& table) {
    auto row = [](const OverlapReport& r) {
        return ojson{{"source", r.source_label},
                     {"target", r.target_label},
                     {"n", r.n},
                     {"hit_count", r.hit_count}};
    };
    return ojson{{"rows", ojson::array({row(table.question_row), row(table.answer_row),
                                        row(table.refaug_row)})},
                 {"refaug_subset_of_answer", table.refaug_subset_of_answer}};
}

ContaminationTable run_contamination_protocol(const DatasetFile& train, const DatasetFile& test,
                                              const std::vector<ReflectiveSection>& refaug,
                                              int n_question, int n_answer) {
    std::vector<Doc> train_questions, train_answers, test_questions, test_answers, sections;
    train_questions.reserve(train.records.size());
    train_answers.reserve(train.records.size());
    for (const auto& r : train.records) {
        train_questions.push_back({r.id, r.question});
        train_answers.push_back({r.id, r.solution});
    }
    test_questions.reserve(test.records.size());
    test_answers.reserve(test.records.size());
    for (const auto& r : test.records) {
        test_questions.push_back({r.id, r.question});
        test_answers.push_back({r.id, r.solution});
    }
    sections.reserve(refaug.size());
    for (const auto& s : refaug) {
        sections.push_back({s.id, s.alternative + "\n\n" + s.follow_up});
    }

    ContaminationTable table;
    table.question_row =
        overlap(train_questions, test_questions, n_question, "train_question", "test_question");
    table.answer_row = overlap(train_answers, test_answers, n_answer, "train_answer", "test_answer");
    table.refaug_row = overlap(sections, test_answers, n_answer, "refaug", "test_answer");

    std::unordered_set<std::string> answer_hit_ids;
    for (const auto& hit : table.answer_row.hits) answer_hit_ids.insert(hit.target_id);
    table.refaug_subset_of_answer =
        std::all_of(table.refaug_row.hits.begin(), table.refaug_row.hits.end(),
                    [&](const OverlapHit& h) { return answer_hit_ids.contains(h.target_id); });
    return table;
}

}  // namespace refaug
