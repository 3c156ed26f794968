#include "refaug/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "refaug/util.hpp"

namespace refaug {
namespace {

std::optional<ErrorLabel> parse_error_label(std::string_view text) {
    std::string token(trim(text));
    auto cut = token.find_first_of(" \t\n.:,");
    if (cut != std::string::npos) token = token.substr(0, cut);
    if (iequals(token, "reasoning")) return ErrorLabel::reasoning;
    if (iequals(token, "calculation")) return ErrorLabel::calculation;
    if (iequals(token, "both")) return ErrorLabel::both;
    return std::nullopt;
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// Canonical column order for the text table; unknown metrics follow, sorted.
const std::vector<std::string>& canonical_columns() {
    static const std::vector<std::string> cols{
        "single",  "fqa_1st", "fqa_2nd", "fqa_3rd", "ec",        "mint_k1",
        "mint_k2", "mint_k3", "mint_k4", "mint_k5", "mint_delta"};
    return cols;
}

}  // namespace

std::string to_string(ErrorLabel v) {
    switch (v) {
        case ErrorLabel::reasoning: return "reasoning";
        case ErrorLabel::calculation: return "calculation";
        case ErrorLabel::both: return "both";
        case ErrorLabel::unclassified: return "unclassified";
    }
    throw Error("invalid error label");
}

ErrorBreakdown ErrorBreakdown::from_marginals(int reasoning, int calculation, int total_wrong) {
    int both = reasoning + calculation - total_wrong;
    if (both < 0 || both > std::min(reasoning, calculation)) {
        throw Error("inconsistent error marginals: both=" + std::to_string(both));
    }
    ErrorBreakdown b;
    b.reasoning = reasoning;
    b.calculation = calculation;
    b.both = both;
    b.total_wrong = total_wrong;
    return b;
}

void to_json(ojson& j, const ErrorBreakdown& b) {
    j = ojson{{"reasoning", b.reasoning},
              {"calculation", b.calculation},
              {"both", b.both},
              {"total_wrong", b.total_wrong},
              {"unclassified", b.unclassified}};
}

ErrorClassification classify_errors(const std::vector<FailureCase>& failures, Gateway& gateway,
                                    const std::string& judge_endpoint,
                                    const PromptTemplate& judge_prompt) {
    std::vector<ErrorLabel> labels(failures.size(), ErrorLabel::unclassified);
    parallel_for(failures.size(), static_cast<std::size_t>(gateway.parallelism()),
                 [&](std::size_t i) {
                     const FailureCase& f = failures[i];
                     std::string prompt = judge_prompt.fill(
                         {{"question", f.question}, {"gold", f.gold_path}, {"solution", f.solution}});
                     for (int attempt = 0; attempt < 2; ++attempt) {
                         ChatRequest request;
                         request.endpoint = judge_endpoint;
                         request.messages = {{Role::user, prompt}};
                         request.decoding = {0.0, 1.0, 8, {}};
                         request.sample_index = attempt;
                         try {
                             ChatResponse response = gateway.chat(request);
                             if (auto label = parse_error_label(response.text)) {
                                 labels[i] = *label;
                                 return;
                             }
                         } catch (const std::exception&) {
                             // judge failure counts as unclassified after retry
                         }
                     }
                 });

    ErrorClassification out;
    for (std::size_t i = 0; i < failures.size(); ++i) {
        out.labels.push_back({failures[i].id, labels[i]});
        switch (labels[i]) {
            case ErrorLabel::reasoning:
                ++out.breakdown.reasoning;
                ++out.breakdown.total_wrong;
                break;
            case ErrorLabel::calculation:
                ++out.breakdown.calculation;
                ++out.breakdown.total_wrong;
                break;
            case ErrorLabel::both:
                ++out.breakdown.reasoning;
                ++out.breakdown.calculation;
                ++out.breakdown.both;
                ++out.breakdown.total_wrong;
                break;
            case ErrorLabel::unclassified:
                ++out.breakdown.unclassified;
                break;
        }
    }
    return out;
}

double mean_token_count(const std::vector<std::string>& texts, const TokenCounter& counter) {
    if (texts.empty()) throw Error("mean_token_count: empty corpus");
    const TokenCounter& count = counter ? counter : TokenCounter([](std::string_view s) {
        return count_ws_tokens(s);
    });
    long long total = 0;
    for (const auto& t : texts) total += count(t);
    return static_cast<double>(total) / static_cast<double>(texts.size());
}

LengthStats token_stats(const std::vector<TrainingSequence>& sequences, const TokenCounter& counter,
                        std::string counter_id) {
    std::vector<std::string> outputs;
    outputs.reserve(sequences.size());
    for (const auto& s : sequences) outputs.push_back(s.output);
    LengthStats stats;
    stats.mean_train_tokens = mean_token_count(outputs, counter);
    stats.counter_id = std::move(counter_id);
    return stats;
}

LengthStats token_stats(const std::vector<GradeResult>& results, const TokenCounter& counter,
                        std::string counter_id) {
    std::vector<std::string> outputs;
    outputs.reserve(results.size());
    for (const auto& r : results) outputs.push_back(r.truncated);
    LengthStats stats;
    stats.mean_test_tokens = mean_token_count(outputs, counter);
    stats.counter_id = std::move(counter_id);
    return stats;
}

void to_json(ojson& j, const LengthStats& s) {
    j = ojson{{"mean_train_tokens", s.mean_train_tokens ? ojson(*s.mean_train_tokens) : ojson(nullptr)},
              {"mean_test_tokens", s.mean_test_tokens ? ojson(*s.mean_test_tokens) : ojson(nullptr)},
              {"counter_id", s.counter_id}};
}

void to_json(ojson& j, const MetricsDoc& d) {
    j = ojson{{"run", d.run}, {"kind", d.kind}, {"metrics", d.metrics}};
}

void from_json(const ojson& j, MetricsDoc& d) {
    d.run = j.at("run").get<std::string>();
    d.kind = j.at("kind").get<std::string>();
    d.metrics = j.at("metrics");
    if (!d.metrics.is_object()) throw Error("metrics must be an object");
}

ojson merge_metrics(const std::vector<MetricsDoc>& docs) {
    if (docs.empty()) throw Error("merge_metrics: no metrics documents");
    std::vector<std::string> run_order;
    ojson by_run = ojson::object();
    for (const auto& doc : docs) {
        if (!by_run.contains(doc.run)) {
            run_order.push_back(doc.run);
            by_run[doc.run] = ojson::object();
        }
        ojson& row = by_run[doc.run];
        for (const auto& [name, value] : doc.metrics.items()) {
            if (row.contains(name) && row.at(name) != value) {
                throw Error("conflicting values for metric '" + name + "' of run '" + doc.run +
                            "'");
            }
            row[name] = value;
        }
    }
    ojson runs = ojson::array();
    for (const auto& run : run_order) {
        runs.push_back(ojson{{"run", run}, {"metrics", by_run[run]}});
    }
    return ojson{{"runs", runs}};
}

std::string render_report_table(const ojson& summary) {
    const auto& runs = summary.at("runs");

    // Columns: canonical ones that appear, then any extras in sorted order.
    std::set<std::string> present;
    for (const auto& row : runs) {
        for (const auto& [name, value] : row.at("metrics").items()) present.insert(name);
    }
    std::vector<std::string> columns;
    for (const auto& c : canonical_columns()) {
        if (present.erase(c)) columns.push_back(c);
    }
    columns.insert(columns.end(), present.begin(), present.end());

    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header{"run"};
    header.insert(header.end(), columns.begin(), columns.end());
    cells.push_back(header);
    for (const auto& row : runs) {
        std::vector<std::string> line{row.at("run").get<std::string>()};
        for (const auto& c : columns) {
            const auto& metrics = row.at("metrics");
            if (!metrics.contains(c)) {
                line.push_back("-");
            } else if (metrics.at(c).is_number()) {
                line.push_back(format_number(metrics.at(c).get<double>()));
            } else {
                line.push_back(metrics.at(c).dump());
            }
        }
        cells.push_back(std::move(line));
    }

    std::vector<std::size_t> widths(cells[0].size(), 0);
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    }
    std::string out;
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out += row[i];
            if (i + 1 < row.size()) out.append(widths[i] - row[i].size() + 2, ' ');
        }
        out += '\n';
    }
    return out;
}

}  // namespace refaug
