#include "refaug/protocols.hpp"

#include <algorithm>
#include <cassert>

#include "refaug/util.hpp"

namespace refaug {
namespace {

constexpr std::array<std::string_view, 4> kProtocolNames{"single", "fqa", "ec", "mint"};

ChatRequest model_request(const RunOptions& options, std::vector<ChatMessage> messages,
                          int sample_index = 0) {
    ChatRequest request;
    request.endpoint = options.endpoint;
    request.messages = std::move(messages);
    request.decoding.temperature = options.temperature;
    request.decoding.top_p = options.top_p;
    request.decoding.max_tokens = options.max_tokens;
    if (!options.stop.empty()) request.decoding.stop = {options.stop};
    request.sample_index = sample_index;
    return request;
}

/// Either true chat turns, or the whole history flattened into one user
/// message for harness-compatibility comparisons.
std::vector<ChatMessage> render_history(const std::vector<ChatMessage>& turns, bool flat) {
    if (!flat) return turns;
    std::string joined;
    for (const auto& m : turns) {
        if (!joined.empty()) joined += "\n";
        joined += m.content;
    }
    return {{Role::user, joined}};
}

std::string require_field(const ojson& j, const char* key, const std::filesystem::path& path,
                          int line) {
    if (!j.contains(key) || !j.at(key).is_string()) {
        throw Error(path.string() + ":" + std::to_string(line) + ": missing field '" + key + "'");
    }
    return j.at(key).get<std::string>();
}

}  // namespace

std::string to_string(Protocol v) { return std::string(kProtocolNames[static_cast<std::size_t>(v)]); }

void to_json(ojson& j, const Transcript& t) {
    ojson turns = ojson::array();
    for (const auto& turn : t.turns) {
        turns.push_back(ojson{{"role", to_string(turn.role)}, {"content", turn.content}});
    }
    j = ojson{{"instance_id", t.instance_id}, {"protocol", to_string(t.protocol)}, {"turns", turns}};
}

void from_json(const ojson& j, Transcript& t) {
    t.instance_id = j.at("instance_id").get<std::string>();
    std::string p = j.at("protocol").get<std::string>();
    auto it = std::find(kProtocolNames.begin(), kProtocolNames.end(), p);
    if (it == kProtocolNames.end()) throw Error("unknown protocol: '" + p + "'");
    t.protocol = static_cast<Protocol>(it - kProtocolNames.begin());
    t.turns.clear();
    for (const auto& turn : j.at("turns")) {
        t.turns.push_back(
            {role_from_string(turn.at("role").get<std::string>()), turn.at("content").get<std::string>()});
    }
}

SingleRunResult run_single_round(Gateway& gateway, const std::vector<MathInstance>& dataset,
                                 const RunOptions& options) {
    SingleRunResult run;
    run.results.resize(dataset.size());
    run.transcripts.resize(dataset.size());

    parallel_for(dataset.size(), static_cast<std::size_t>(gateway.parallelism()), [&](std::size_t i) {
        const MathInstance& inst = dataset[i];
        Transcript transcript{inst.id, Protocol::single, {{Role::user, inst.question}}};
        GradeResult result;
        try {
            ChatResponse response =
                gateway.chat(model_request(options, {{Role::user, inst.question}}));
            result = grade_generation(inst.id, response.text, inst.final_answer, options.stop);
        } catch (const std::exception& e) {
            result.id = inst.id;
            result.gold = inst.final_answer;
            result.verdict = Verdict::no_answer;
            result.raw_generation = std::string("[gateway error] ") + e.what();
        }
        transcript.turns.push_back({Role::assistant, result.truncated});
        run.results[i] = std::move(result);
        run.transcripts[i] = std::move(transcript);
    });

    std::map<std::string, std::string> sources;
    for (const auto& inst : dataset) sources[inst.id] = to_string(inst.source);
    run.summary = score(run.results, [&](const GradeResult& r) {
        auto it = sources.find(r.id);
        return it == sources.end() ? std::string("unknown") : it->second;
    });
    return run;
}

std::vector<FqaInstance> load_fqa_dataset(const std::filesystem::path& path) {
    std::vector<FqaInstance> out;
    int line = 0;
    for (const ojson& j : detail::parse_jsonl(path)) {
        ++line;
        FqaInstance inst;
        inst.id = j.contains("id") ? j.at("id").get<std::string>() : "fqa-" + std::to_string(line);
        inst.questions = {require_field(j, "q1", path, line), require_field(j, "q2", path, line),
                          require_field(j, "q3", path, line)};
        inst.golds = {require_field(j, "gold1", path, line), require_field(j, "gold2", path, line),
                      require_field(j, "gold3", path, line)};
        out.push_back(std::move(inst));
    }
    return out;
}

void save_fqa_dataset(const std::vector<FqaInstance>& instances,
                      const std::filesystem::path& path) {
    std::string buf;
    for (const auto& inst : instances) {
        ojson j{{"id", inst.id},       {"q1", inst.questions[0]}, {"gold1", inst.golds[0]},
                {"q2", inst.questions[1]}, {"gold2", inst.golds[1]}, {"q3", inst.questions[2]},
                {"gold3", inst.golds[2]}};
        buf += j.dump();
        buf += '\n';
    }
    write_text_file(path, buf);
}

FqaRunResult run_fqa(Gateway& gateway, const std::vector<FqaInstance>& dataset,
                     const RunOptions& options) {
    FqaRunResult run;
    run.results.resize(dataset.size());
    run.transcripts.resize(dataset.size());

    parallel_for(dataset.size(), static_cast<std::size_t>(gateway.parallelism()), [&](std::size_t i) {
        const FqaInstance& inst = dataset[i];
        std::vector<ChatMessage> history;
        Transcript transcript{inst.id, Protocol::fqa, {}};
        for (int turn = 0; turn < 3; ++turn) {
            history.push_back({Role::user, inst.questions[turn]});
            transcript.turns.push_back({Role::user, inst.questions[turn]});
            GradeResult result;
            std::string answer;
            try {
                ChatResponse response = gateway.chat(
                    model_request(options, render_history(history, options.flat_history)));
                result = grade_generation(inst.id, response.text, inst.golds[turn], options.stop);
                answer = result.truncated;
            } catch (const std::exception& e) {
                result.id = inst.id;
                result.gold = inst.golds[turn];
                result.verdict = Verdict::no_answer;
                result.raw_generation = std::string("[gateway error] ") + e.what();
            }
            // The model's own (possibly empty) generation feeds later turns.
            history.push_back({Role::assistant, answer});
            transcript.turns.push_back({Role::assistant, answer});
            run.results[i][turn] = std::move(result);
        }
        run.transcripts[i] = std::move(transcript);
    });

    if (!dataset.empty()) {
        for (int turn = 0; turn < 3; ++turn) {
            int correct = 0;
            for (const auto& per_instance : run.results) {
                if (per_instance[turn].verdict == Verdict::correct) ++correct;
            }
            run.turn_accuracy[turn] =
                static_cast<double>(correct) / static_cast<double>(dataset.size());
        }
    }
    return run;
}

std::vector<EcInstance> load_ec_dataset(const std::filesystem::path& path) {
    std::vector<EcInstance> out;
    int line = 0;
    for (const ojson& j : detail::parse_jsonl(path)) {
        ++line;
        EcInstance inst;
        inst.id = j.contains("id") ? j.at("id").get<std::string>() : "ec-" + std::to_string(line);
        inst.question = require_field(j, "q", path, line);
        inst.wrong_answer = require_field(j, "wrong_answer", path, line);
        inst.gold = require_field(j, "gold", path, line);
        auto extracted = extract_prediction(inst.wrong_answer);
        if (extracted && answers_equal(*extracted, inst.gold)) {
            throw Error(path.string() + ":" + std::to_string(line) +
                        ": wrong_answer actually matches gold");
        }
        out.push_back(std::move(inst));
    }
    return out;
}

void save_ec_dataset(const std::vector<EcInstance>& instances, const std::filesystem::path& path) {
    std::string buf;
    for (const auto& inst : instances) {
        ojson j{{"id", inst.id},
                {"q", inst.question},
                {"wrong_answer", inst.wrong_answer},
                {"gold", inst.gold}};
        buf += j.dump();
        buf += '\n';
    }
    write_text_file(path, buf);
}

EcRunResult run_ec(Gateway& gateway, const std::vector<EcInstance>& dataset,
                   const RunOptions& options) {
    EcRunResult run;
    run.results.resize(dataset.size());
    run.transcripts.resize(dataset.size());

    parallel_for(dataset.size(), static_cast<std::size_t>(gateway.parallelism()), [&](std::size_t i) {
        const EcInstance& inst = dataset[i];
        std::vector<ChatMessage> turns{{Role::user, inst.question},
                                       {Role::assistant, inst.wrong_answer},
                                       {Role::user, std::string(kEcFeedback)}};
        Transcript transcript{inst.id, Protocol::ec, {}};
        for (const auto& m : turns) transcript.turns.push_back({m.role, m.content});

        GradeResult result;
        try {
            ChatResponse response =
                gateway.chat(model_request(options, render_history(turns, options.flat_history)));
            result = grade_generation(inst.id, response.text, inst.gold, options.stop);
        } catch (const std::exception& e) {
            result.id = inst.id;
            result.gold = inst.gold;
            result.verdict = Verdict::no_answer;
            result.raw_generation = std::string("[gateway error] ") + e.what();
        }
        transcript.turns.push_back({Role::assistant, result.truncated});
        run.results[i] = std::move(result);
        run.transcripts[i] = std::move(transcript);
    });

    if (!dataset.empty()) {
        int correct = 0;
        for (const auto& r : run.results) {
            if (r.verdict == Verdict::correct) ++correct;
        }
        run.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    }
    return run;
}

std::vector<MintInstance> load_mint_dataset(const std::filesystem::path& path) {
    std::vector<MintInstance> out;
    int line = 0;
    for (const ojson& j : detail::parse_jsonl(path)) {
        ++line;
        MintInstance inst;
        inst.id = j.contains("id") ? j.at("id").get<std::string>() : "mint-" + std::to_string(line);
        inst.question = require_field(j, "q", path, line);
        inst.gold = require_field(j, "gold", path, line);
        inst.source = j.value("source", "unknown");
        out.push_back(std::move(inst));
    }
    return out;
}

void save_mint_dataset(const std::vector<MintInstance>& instances,
                       const std::filesystem::path& path) {
    std::string buf;
    for (const auto& inst : instances) {
        ojson j{{"id", inst.id}, {"q", inst.question}, {"gold", inst.gold}, {"source", inst.source}};
        buf += j.dump();
        buf += '\n';
    }
    write_text_file(path, buf);
}

void to_json(ojson& j, const MintOutcome& o) {
    j = ojson{{"id", o.id},
              {"per_turn_correct", o.per_turn_correct},
              {"solved_at", o.solved_at ? ojson(*o.solved_at) : ojson(nullptr)},
              {"feedback", o.feedback}};
}

MintRunResult run_mint(Gateway& gateway, const std::vector<MintInstance>& dataset,
                       const PromptTemplate& feedback_prompt, const MintOptions& options) {
    if (options.k < 1) throw Error("run_mint: k must be >= 1");

    MintRunResult run;
    run.outcomes.resize(dataset.size());
    run.transcripts.resize(dataset.size());

    parallel_for(dataset.size(), static_cast<std::size_t>(gateway.parallelism()), [&](std::size_t i) {
        const MintInstance& inst = dataset[i];
        MintOutcome outcome;
        outcome.id = inst.id;
        std::vector<ChatMessage> history{{Role::user, inst.question}};

        for (int turn = 1; turn <= options.k; ++turn) {
            GradeResult result;
            std::string answer;
            try {
                ChatResponse response = gateway.chat(
                    model_request(options.run, render_history(history, options.run.flat_history)));
                result = grade_generation(inst.id, response.text, inst.gold, options.run.stop);
                answer = result.truncated;
            } catch (const std::exception& e) {
                result.verdict = Verdict::no_answer;
                answer = std::string("[gateway error] ") + e.what();
            }
            history.push_back({Role::assistant, answer});
            bool correct = result.verdict == Verdict::correct;
            outcome.per_turn_correct.push_back(correct);
            if (correct) {
                outcome.solved_at = turn;
                break;
            }
            if (turn == options.k) break;

            // Binary verdict plus expert critique as the next user turn.
            std::string expert_text;
            try {
                ChatRequest expert;
                expert.endpoint = options.expert_endpoint;
                expert.messages = {{Role::user, feedback_prompt.fill({{"question", inst.question},
                                                                      {"attempt", answer},
                                                                      {"gold", inst.gold}})}};
                expert.decoding.temperature = 0.0;
                expert.decoding.top_p = 1.0;
                expert.decoding.max_tokens = options.expert_max_tokens;
                expert_text = gateway.chat(expert).text;
            } catch (const std::exception&) {
                expert_text.clear();  // degrade to binary-only feedback
            }
            outcome.feedback.push_back(expert_text);
            std::string user_turn = std::string(kMintIncorrect);
            if (!expert_text.empty()) user_turn += "\n" + expert_text;
            history.push_back({Role::user, user_turn});
        }

        Transcript transcript{inst.id, Protocol::mint, {}};
        for (const auto& m : history) transcript.turns.push_back({m.role, m.content});
        run.outcomes[i] = std::move(outcome);
        run.transcripts[i] = std::move(transcript);
    });

    run.cumulative_accuracy.assign(static_cast<std::size_t>(options.k), 0.0);
    if (!dataset.empty()) {
        for (int turn = 1; turn <= options.k; ++turn) {
            int solved = 0;
            for (const auto& o : run.outcomes) {
                if (o.solved_at && *o.solved_at <= turn) ++solved;
            }
            run.cumulative_accuracy[turn - 1] =
                static_cast<double>(solved) / static_cast<double>(dataset.size());
        }
    }
    for (std::size_t t = 1; t < run.cumulative_accuracy.size(); ++t) {
        if (run.cumulative_accuracy[t] < run.cumulative_accuracy[t - 1]) {
            throw Error("run_mint: cumulative accuracy decreased between turns");
        }
    }
    run.delta = run.cumulative_accuracy.empty()
                    ? 0.0
                    : run.cumulative_accuracy.back() - run.cumulative_accuracy.front();
    return run;
}

}  // namespace refaug
