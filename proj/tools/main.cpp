// refaug: construct, validate, and evaluate reflection-augmented math
// training data over line-delimited record files.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>

#include "refaug/analysis.hpp"
#include "refaug/augment.hpp"
#include "refaug/gateway.hpp"
#include "refaug/grading.hpp"
#include "refaug/ngram.hpp"
#include "refaug/prompt.hpp"
#include "refaug/protocols.hpp"
#include "refaug/records.hpp"
#include "refaug/sequence.hpp"

namespace {

using namespace refaug;

constexpr const char* kEndpointIds[] = {"annotator", "model", "judge", "expert"};

struct EndpointSettings {
    std::string base_url = "http://localhost:8000";
    std::string model = "gpt-4-turbo";
    std::string api_key_env = "OPENAI_API_KEY";
    double rate_limit_per_s = 0.0;
};

struct ToolConfig {
    std::map<std::string, EndpointSettings> endpoints = {
        {"annotator", {}}, {"model", {}}, {"judge", {}}, {"expert", {}}};
    int parallelism = 4;
    RetryPolicy retry;
    std::string cache_dir = "cache";
    std::string cache_mode = "off";
    std::string prompts_dir = "prompts";
    std::uint64_t seed = 0;
    bool dry_run = false;

    ojson to_json() const {
        ojson eps = ojson::object();
        for (const auto& [id, ep] : endpoints) {
            eps[id] = ojson{{"base_url", ep.base_url},
                            {"model", ep.model},
                            {"api_key_env", ep.api_key_env},
                            {"rate_limit_per_s", ep.rate_limit_per_s}};
        }
        return ojson{{"endpoints", eps},
                     {"parallelism", parallelism},
                     {"retry",
                      ojson{{"max_attempts", retry.max_attempts},
                            {"base_delay_ms", retry.base_delay_ms},
                            {"factor", retry.factor}}},
                     {"cache_dir", cache_dir},
                     {"cache_mode", cache_mode},
                     {"prompts_dir", prompts_dir},
                     {"seed", seed}};
    }
};

std::optional<std::string> env_string(const std::string& name) {
    if (const char* v = std::getenv(name.c_str()); v && *v) return std::string(v);
    return std::nullopt;
}

void apply_config_file(ToolConfig& cfg, const std::filesystem::path& path) {
    ojson j = ojson::parse(read_text_file(path));
    if (j.contains("endpoints")) {
        for (auto& [id, ep] : cfg.endpoints) {
            if (!j["endpoints"].contains(id)) continue;
            const ojson& e = j["endpoints"][id];
            ep.base_url = e.value("base_url", ep.base_url);
            ep.model = e.value("model", ep.model);
            ep.api_key_env = e.value("api_key_env", ep.api_key_env);
            ep.rate_limit_per_s = e.value("rate_limit_per_s", ep.rate_limit_per_s);
        }
    }
    cfg.parallelism = j.value("parallelism", cfg.parallelism);
    if (j.contains("retry")) {
        const ojson& r = j["retry"];
        cfg.retry.max_attempts = r.value("max_attempts", cfg.retry.max_attempts);
        cfg.retry.base_delay_ms = r.value("base_delay_ms", cfg.retry.base_delay_ms);
        cfg.retry.factor = r.value("factor", cfg.retry.factor);
    }
    cfg.cache_dir = j.value("cache_dir", cfg.cache_dir);
    cfg.cache_mode = j.value("cache_mode", cfg.cache_mode);
    cfg.prompts_dir = j.value("prompts_dir", cfg.prompts_dir);
    cfg.seed = j.value("seed", cfg.seed);
}

void apply_env(ToolConfig& cfg) {
    if (auto v = env_string("REFAUG_BASE_URL")) {
        for (auto& [id, ep] : cfg.endpoints) ep.base_url = *v;
    }
    if (auto v = env_string("REFAUG_MODEL_NAME")) {
        for (auto& [id, ep] : cfg.endpoints) ep.model = *v;
    }
    for (const char* id : kEndpointIds) {
        std::string upper(id);
        std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
        if (auto v = env_string("REFAUG_" + upper + "_URL")) cfg.endpoints[id].base_url = *v;
        if (auto v = env_string("REFAUG_" + upper + "_MODEL")) cfg.endpoints[id].model = *v;
    }
    if (auto v = env_string("REFAUG_CACHE_DIR")) cfg.cache_dir = *v;
    if (auto v = env_string("REFAUG_CACHE_MODE")) cfg.cache_mode = *v;
    if (auto v = env_string("REFAUG_PROMPTS_DIR")) cfg.prompts_dir = *v;
    if (auto v = env_string("REFAUG_PARALLELISM")) cfg.parallelism = std::stoi(*v);
    if (auto v = env_string("REFAUG_SEED")) cfg.seed = std::stoull(*v);
}

Gateway build_gateway(const ToolConfig& cfg) {
    GatewayConfig g;
    for (const char* id : kEndpointIds) {
        const EndpointSettings& s = cfg.endpoints.at(id);
        EndpointConfig ep;
        ep.id = id;
        ep.base_url = s.base_url;
        ep.model = s.model;
        ep.api_key_env = s.api_key_env;
        ep.retry = cfg.retry;
        ep.rate_limit_per_s = s.rate_limit_per_s;
        g.endpoints.push_back(ep);
    }
    g.parallelism = cfg.parallelism;
    g.cache_mode = cache_mode_from_string(cfg.cache_mode);
    g.cache_dir = cfg.cache_dir;
    return Gateway(std::move(g), std::make_shared<HttpTransport>());
}

PromptTemplate load_prompt(const ToolConfig& cfg, const std::string& name,
                           const std::string& override_path) {
    if (!override_path.empty()) return PromptTemplate::from_file(override_path);
    return PromptTemplate::from_file(std::filesystem::path(cfg.prompts_dir) / (name + ".txt"));
}

void write_meta(const std::filesystem::path& out, const std::string& command,
                const std::vector<std::string>& argv, const ToolConfig& cfg,
                const std::map<std::string, std::string>& prompt_hashes = {},
                const ojson& extra = ojson::object()) {
    ojson meta{{"command", command}, {"argv", argv}, {"config", cfg.to_json()}};
    if (!prompt_hashes.empty()) {
        ojson hashes = ojson::object();
        for (const auto& [name, hash] : prompt_hashes) hashes[name] = hash;
        meta["prompts"] = hashes;
    }
    for (const auto& [key, value] : extra.items()) meta[key] = value;
    write_text_file(out.string() + ".meta.json", meta.dump(2) + "\n");
}

void print_json(const ojson& j) { std::cout << j.dump() << "\n"; }

void dry_run_plan(const std::string& command, long min_calls, long max_calls, long prompt_bytes) {
    print_json(ojson{{"dry_run", true},
                     {"command", command},
                     {"planned_calls_min", min_calls},
                     {"planned_calls_max", max_calls},
                     {"prompt_bytes", prompt_bytes}});
}

std::map<std::string, ReflectiveSection> sections_by_seed(
    const std::vector<ReflectiveSection>& sections) {
    std::map<std::string, ReflectiveSection> map;
    for (const auto& s : sections) map[s.seed_id] = s;
    return map;
}

double percent(double fraction) { return fraction * 100.0; }

// ---------------------------------------------------------------------------
// command handlers

struct CommonIo {
    std::vector<std::string> argv;
    ToolConfig* cfg = nullptr;
};

struct IngestOpts {
    std::string in, format, split = "train", out, errors;
    bool skip_malformed = false;
};

void cmd_ingest(const IngestOpts& o, const CommonIo& io) {
    DatasetFile ds = load_dataset(o.in, dataset_format_from_string(o.format),
                                  split_from_string(o.split), !o.skip_malformed);
    save_records(ds.records, o.out);
    if (!o.errors.empty()) save_records(ds.errors, o.errors);
    write_meta(o.out, "ingest", io.argv, *io.cfg);
    print_json(ojson{{"records", ds.records.size()}, {"errors", ds.errors.size()}});
}

struct AugmentOpts {
    std::string in, out, prompt, failures;
    int max_attempts = 5;
    bool verified_only = false;
    int rounds = 1;
};

void save_failures(const std::vector<AugmentFailure>& failures, const std::string& explicit_path,
                   const std::string& default_path) {
    if (failures.empty() && explicit_path.empty()) return;
    std::string buf;
    for (const auto& f : failures) {
        buf += ojson{{"id", f.id}, {"error", f.error}}.dump();
        buf += '\n';
    }
    write_text_file(explicit_path.empty() ? default_path : explicit_path, buf);
}

void cmd_augment_refaug(const AugmentOpts& o, const CommonIo& io) {
    auto instances = load_records<MathInstance>(o.in);
    PromptTemplate prompt = load_prompt(*io.cfg, "reflection", o.prompt);
    if (io.cfg->dry_run) {
        long bytes = 0;
        for (const auto& i : instances) {
            bytes += static_cast<long>(
                prompt.fill({{"question", i.question}, {"solution", i.solution}}).size());
        }
        dry_run_plan("augment refaug", static_cast<long>(instances.size()),
                     2 * static_cast<long>(instances.size()), bytes);
        return;
    }
    Gateway gateway = build_gateway(*io.cfg);
    AnnotateBatchResult result =
        annotate_reflections(instances, gateway, prompt, AnnotationParams{});
    save_records(result.sections, o.out);
    save_records(result.lineage, o.out + ".lineage.jsonl");
    save_failures(result.failures, o.failures, o.out + ".failures.jsonl");
    write_meta(o.out, "augment refaug", io.argv, *io.cfg, {{prompt.name, prompt.hash()}});
    print_json(ojson{{"sections", result.sections.size()}, {"failures", result.failures.size()}});
}

void cmd_augment_qaug(const AugmentOpts& o, const CommonIo& io) {
    auto instances = load_records<MathInstance>(o.in);
    PromptTemplate prompt = load_prompt(*io.cfg, "question_aug", o.prompt);
    if (io.cfg->dry_run) {
        long bytes = 0;
        for (const auto& i : instances) {
            bytes += static_cast<long>(prompt.fill({{"question", i.question}}).size());
        }
        dry_run_plan("augment qaug", static_cast<long>(instances.size()),
                     2 * static_cast<long>(instances.size()), bytes);
        return;
    }
    Gateway gateway = build_gateway(*io.cfg);
    QuestionAugBatchResult result =
        augment_questions(instances, gateway, prompt, AnnotationParams{});
    save_records(result.instances, o.out);
    save_records(result.lineage, o.out + ".lineage.jsonl");
    save_failures(result.failures, o.failures, o.out + ".failures.jsonl");
    write_meta(o.out, "augment qaug", io.argv, *io.cfg, {{prompt.name, prompt.hash()}});
    print_json(ojson{{"instances", result.instances.size()}, {"failures", result.failures.size()}});
}

void cmd_augment_aaug(const AugmentOpts& o, const CommonIo& io) {
    auto instances = load_records<MathInstance>(o.in);
    PromptTemplate prompt = load_prompt(*io.cfg, "answer_aug", o.prompt);
    if (io.cfg->dry_run) {
        long bytes = 0;
        for (const auto& i : instances) {
            bytes += static_cast<long>(prompt.fill({{"question", i.question}}).size());
        }
        dry_run_plan("augment aaug", static_cast<long>(instances.size()),
                     static_cast<long>(o.max_attempts) * static_cast<long>(instances.size()),
                     bytes);
        return;
    }
    Gateway gateway = build_gateway(*io.cfg);
    AnswerAugBatchResult result =
        augment_answers(instances, gateway, prompt, AnnotationParams{}, o.max_attempts);

    std::vector<MathInstance> products;
    std::string details;
    for (std::size_t i = 0; i < result.instances.size(); ++i) {
        if (o.verified_only && !result.details[i].verified) continue;
        products.push_back(result.instances[i]);
        details += ojson{{"id", result.instances[i].id},
                         {"attempts", result.details[i].attempts},
                         {"verified", result.details[i].verified}}
                       .dump();
        details += '\n';
    }
    save_records(products, o.out);
    save_records(result.lineage, o.out + ".lineage.jsonl");
    write_text_file(o.out + ".details.jsonl", details);
    save_failures(result.failures, o.failures, o.out + ".failures.jsonl");
    write_meta(o.out, "augment aaug", io.argv, *io.cfg, {{prompt.name, prompt.hash()}});
    print_json(ojson{{"instances", products.size()}, {"failures", result.failures.size()}});
}

void cmd_augment_metamath(const AugmentOpts& o, const CommonIo& io) {
    auto pool = load_records<MathInstance>(o.in);
    auto selected = sample_metamath(pool, o.rounds, io.cfg->seed);
    save_records(selected, o.out);
    write_meta(o.out, "augment metamath-sample", io.argv, *io.cfg);
    print_json(ojson{{"pool", pool.size()}, {"selected", selected.size()}});
}

struct BuildOpts {
    std::string in, reflections, out, lineage = "standard";
    std::string system_prompt;
    double proportion = 1.0;
};

void cmd_build_standard(const BuildOpts& o, const CommonIo& io) {
    auto instances = load_records<MathInstance>(o.in);
    Lineage lineage = lineage_from_string(o.lineage);
    std::vector<TrainingSequence> sequences;
    sequences.reserve(instances.size());
    for (const auto& inst : instances) {
        sequences.push_back(render_standard(inst, lineage, o.system_prompt));
    }
    save_records(sequences, o.out);
    write_meta(o.out, "build standard", io.argv, *io.cfg);
    print_json(ojson{{"sequences", sequences.size()}});
}

void cmd_build_refaug(const BuildOpts& o, const CommonIo& io, Placement placement) {
    auto instances = load_records<MathInstance>(o.in);
    auto reflections = sections_by_seed(load_records<ReflectiveSection>(o.reflections));
    std::vector<TrainingSequence> sequences;
    sequences.reserve(instances.size());
    for (const auto& inst : instances) {
        auto it = reflections.find(inst.id);
        if (it == reflections.end()) {
            throw Error("no reflection for instance '" + inst.id + "'");
        }
        sequences.push_back(render_refaug(inst, it->second, placement, o.system_prompt));
    }
    save_records(sequences, o.out);
    write_meta(o.out, placement == Placement::tail ? "build refaug" : "build front", io.argv,
               *io.cfg);
    print_json(ojson{{"sequences", sequences.size()}});
}

void cmd_build_mix(const BuildOpts& o, const CommonIo& io) {
    auto instances = load_records<MathInstance>(o.in);
    auto reflections = sections_by_seed(load_records<ReflectiveSection>(o.reflections));
    auto [sequences, plan] =
        mix(instances, reflections, o.proportion, io.cfg->seed, o.system_prompt);
    save_records(sequences, o.out);
    write_text_file(o.out + ".plan.json", ojson(plan).dump(2) + "\n");
    write_meta(o.out, "build mix", io.argv, *io.cfg);
    print_json(ojson(plan));
}

struct BuildManifestOpts {
    std::string preset = "standard", out;
    std::vector<std::string> datasets;
    std::string counts_from;
};

void cmd_build_manifest(const BuildManifestOpts& o, const CommonIo& io) {
    ManifestOptions options;
    options.preset = manifest_preset_from_string(o.preset);
    options.dataset_paths = o.datasets;
    if (!o.counts_from.empty()) {
        for (const auto& seq : load_records<TrainingSequence>(o.counts_from)) {
            ++options.lineage_counts[to_string(seq.lineage)];
        }
    }
    ojson manifest = emit_manifest(options);
    write_text_file(o.out, manifest.dump(2) + "\n");
    write_meta(o.out, "build manifest", io.argv, *io.cfg);
    print_json(ojson{{"manifest", o.out}});
}

struct GradeOpts {
    std::string generations, dataset, out, stop = "Reflection:", metrics, run_name;
};

void cmd_grade(const GradeOpts& o, const CommonIo& io) {
    auto instances = load_records<MathInstance>(o.dataset);
    std::map<std::string, const MathInstance*> by_id;
    for (const auto& i : instances) by_id[i.id] = &i;

    std::vector<GradeResult> results;
    int line = 0;
    for (const ojson& j : detail::parse_jsonl(o.generations)) {
        ++line;
        std::string id = j.at("id").get<std::string>();
        std::string generation = j.at("generation").get<std::string>();
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw Error(o.generations + ":" + std::to_string(line) + ": unknown instance id '" +
                        id + "'");
        }
        results.push_back(grade_generation(id, generation, it->second->final_answer, o.stop));
    }
    save_records(results, o.out);
    ScoreSummary summary = score(results, [&](const GradeResult& r) {
        return to_string(by_id.at(r.id)->source);
    });
    ojson by_source = ojson::object();
    for (const auto& [src, counts] : summary.by_source) {
        by_source[src] = ojson{{"correct", counts.first}, {"total", counts.second}};
    }
    if (!o.metrics.empty()) {
        MetricsDoc doc{o.run_name.empty() ? std::filesystem::path(o.out).stem().string()
                                          : o.run_name,
                       "single", ojson{{"single", percent(summary.accuracy)}}};
        write_text_file(o.metrics, ojson(doc).dump(2) + "\n");
    }
    write_meta(o.out, "grade", io.argv, *io.cfg);
    print_json(ojson{{"accuracy", summary.accuracy},
                     {"total", summary.total},
                     {"no_answer", summary.no_answer},
                     {"by_source", by_source}});
}

struct DecontaminateOpts {
    std::string train, test, refaug, out, summary;
    int n_question = 20;
    int n_answer = 30;
};

void cmd_decontaminate(const DecontaminateOpts& o, const CommonIo& io) {
    DatasetFile train;
    train.records = load_records<MathInstance>(o.train);
    DatasetFile test;
    test.records = load_records<MathInstance>(o.test);
    std::vector<ReflectiveSection> sections;
    if (!o.refaug.empty()) sections = load_records<ReflectiveSection>(o.refaug);

    ContaminationTable table =
        run_contamination_protocol(train, test, sections, o.n_question, o.n_answer);

    std::string buf;
    for (const OverlapReport* row : {&table.question_row, &table.answer_row, &table.refaug_row}) {
        buf += ojson(*row).dump();
        buf += '\n';
    }
    write_text_file(o.out, buf);
    ojson summary = contamination_summary(table);
    if (!o.summary.empty()) write_text_file(o.summary, summary.dump(2) + "\n");
    write_meta(o.out, "decontaminate", io.argv, *io.cfg);
    print_json(summary);
}

struct EvalOpts {
    std::string dataset, out, transcripts, metrics, run_name;
    std::string stop = "Reflection:";
    std::string feedback_prompt;
    int max_tokens = 1024;
    int k = 5;
    bool flat_history = false;
};

std::string eval_run_name(const EvalOpts& o) {
    return o.run_name.empty() ? std::filesystem::path(o.out).stem().string() : o.run_name;
}

void write_transcripts(const std::string& path, const std::vector<Transcript>& transcripts) {
    if (path.empty()) return;
    std::string buf;
    for (const auto& t : transcripts) {
        buf += ojson(t).dump();
        buf += '\n';
    }
    write_text_file(path, buf);
}

void write_metrics(const std::string& path, const std::string& run, const std::string& kind,
                   ojson metrics) {
    if (path.empty()) return;
    MetricsDoc doc{run, kind, std::move(metrics)};
    write_text_file(path, ojson(doc).dump(2) + "\n");
}

RunOptions eval_run_options(const EvalOpts& o) {
    RunOptions options;
    options.stop = o.stop;
    options.max_tokens = o.max_tokens;
    options.flat_history = o.flat_history;
    return options;
}

void cmd_eval_single(const EvalOpts& o, const CommonIo& io) {
    auto instances = load_records<MathInstance>(o.dataset);
    if (io.cfg->dry_run) {
        long bytes = 0;
        for (const auto& i : instances) bytes += static_cast<long>(i.question.size());
        dry_run_plan("eval single", static_cast<long>(instances.size()),
                     static_cast<long>(instances.size()), bytes);
        return;
    }
    Gateway gateway = build_gateway(*io.cfg);
    SingleRunResult run = run_single_round(gateway, instances, eval_run_options(o));
    save_records(run.results, o.out);
    write_transcripts(o.transcripts, run.transcripts);
    write_metrics(o.metrics, eval_run_name(o), "single",
                  ojson{{"single", percent(run.summary.accuracy)}});
    write_meta(o.out, "eval single", io.argv, *io.cfg);
    print_json(ojson{{"accuracy", run.summary.accuracy}, {"total", run.summary.total}});
}

void cmd_eval_fqa(const EvalOpts& o, const CommonIo& io) {
    auto instances = load_fqa_dataset(o.dataset);
    if (io.cfg->dry_run) {
        long bytes = 0;
        for (const auto& i : instances) {
            for (const auto& q : i.questions) bytes += static_cast<long>(q.size());
        }
        dry_run_plan("eval fqa", 3 * static_cast<long>(instances.size()),
                     3 * static_cast<long>(instances.size()), bytes);
        return;
    }
    Gateway gateway = build_gateway(*io.cfg);
    FqaRunResult run = run_fqa(gateway, instances, eval_run_options(o));

    std::string buf;
    for (const auto& per_instance : run.results) {
        for (const auto& r : per_instance) {
            buf += ojson(r).dump();
            buf += '\n';
        }
    }
    write_text_file(o.out, buf);
    write_transcripts(o.transcripts, run.transcripts);
    write_metrics(o.metrics, eval_run_name(o), "fqa",
                  ojson{{"fqa_1st", percent(run.turn_accuracy[0])},
                        {"fqa_2nd", percent(run.turn_accuracy[1])},
                        {"fqa_3rd", percent(run.turn_accuracy[2])}});
    write_meta(o.out, "eval fqa", io.argv, *io.cfg);
    print_json(ojson{{"turn_accuracy", run.turn_accuracy}});
}

void cmd_eval_ec(const EvalOpts& o, const CommonIo& io) {
    auto instances = load_ec_dataset(o.dataset);
    if (io.cfg->dry_run) {
        long bytes = 0;
        for (const auto& i : instances) {
            bytes += static_cast<long>(i.question.size() + i.wrong_answer.size() +
                                       kEcFeedback.size());
        }
        dry_run_plan("eval ec", static_cast<long>(instances.size()),
                     static_cast<long>(instances.size()), bytes);
        return;
    }
    Gateway gateway = build_gateway(*io.cfg);
    EcRunResult run = run_ec(gateway, instances, eval_run_options(o));
    save_records(run.results, o.out);
    write_transcripts(o.transcripts, run.transcripts);
    write_metrics(o.metrics, eval_run_name(o), "ec", ojson{{"ec", percent(run.accuracy)}});
    write_meta(o.out, "eval ec", io.argv, *io.cfg);
    print_json(ojson{{"accuracy", run.accuracy}});
}

void cmd_eval_mint(const EvalOpts& o, const CommonIo& io) {
    auto instances = load_mint_dataset(o.dataset);
    if (instances.size() != kMintMathSubsetTotal) {
        std::cerr << ojson{{"note", "dataset has " + std::to_string(instances.size()) +
                                        " instances; the published math subset has " +
                                        std::to_string(kMintMathSubsetTotal)}}
                          .dump()
                  << "\n";
    }
    PromptTemplate feedback = load_prompt(*io.cfg, "mint_feedback", o.feedback_prompt);
    if (io.cfg->dry_run) {
        long bytes = 0;
        for (const auto& i : instances) bytes += static_cast<long>(i.question.size());
        dry_run_plan("eval mint", static_cast<long>(instances.size()),
                     static_cast<long>(instances.size()) * (2 * o.k - 1), bytes);
        return;
    }
    Gateway gateway = build_gateway(*io.cfg);
    MintOptions options;
    options.run = eval_run_options(o);
    options.k = o.k;
    MintRunResult run = run_mint(gateway, instances, feedback, options);

    std::string buf;
    for (const auto& outcome : run.outcomes) {
        buf += ojson(outcome).dump();
        buf += '\n';
    }
    write_text_file(o.out, buf);
    write_transcripts(o.transcripts, run.transcripts);
    ojson metrics = ojson::object();
    for (int t = 1; t <= o.k; ++t) {
        metrics["mint_k" + std::to_string(t)] = percent(run.cumulative_accuracy[t - 1]);
    }
    metrics["mint_delta"] = percent(run.delta);
    write_metrics(o.metrics, eval_run_name(o), "mint", metrics);
    // the expert feedback template is part of the protocol definition; keep
    // its verbatim text with the run
    write_meta(o.out, "eval mint", io.argv, *io.cfg, {{feedback.name, feedback.hash()}},
               ojson{{"feedback_prompt_text", feedback.text}});
    print_json(ojson{{"cumulative_accuracy", run.cumulative_accuracy}, {"delta", run.delta}});
}

struct AnalyzeErrorsOpts {
    std::string results, transcripts, dataset, out, labels, prompt;
};

void cmd_analyze_errors(const AnalyzeErrorsOpts& o, const CommonIo& io) {
    auto results = load_records<GradeResult>(o.results);
    auto instances = load_records<MathInstance>(o.dataset);
    std::map<std::string, const MathInstance*> by_id;
    for (const auto& i : instances) by_id[i.id] = &i;

    std::map<std::string, std::string> model_solutions;
    for (const ojson& j : detail::parse_jsonl(o.transcripts)) {
        Transcript t = j.get<Transcript>();
        for (auto it = t.turns.rbegin(); it != t.turns.rend(); ++it) {
            if (it->role == Role::assistant) {
                model_solutions[t.instance_id] = it->content;
                break;
            }
        }
    }

    std::vector<FailureCase> failures;
    for (const auto& r : results) {
        if (r.verdict == Verdict::correct) continue;
        auto inst = by_id.find(r.id);
        if (inst == by_id.end()) throw Error("no dataset record for result id '" + r.id + "'");
        auto sol = model_solutions.find(r.id);
        if (sol == model_solutions.end()) {
            throw Error("no transcript for result id '" + r.id + "'");
        }
        failures.push_back({r.id, inst->second->question, sol->second, inst->second->solution});
    }

    PromptTemplate prompt = load_prompt(*io.cfg, "error_classify", o.prompt);
    if (io.cfg->dry_run) {
        long bytes = 0;
        for (const auto& f : failures) {
            bytes += static_cast<long>(prompt
                                           .fill({{"question", f.question},
                                                  {"gold", f.gold_path},
                                                  {"solution", f.solution}})
                                           .size());
        }
        dry_run_plan("analyze errors", static_cast<long>(failures.size()),
                     2 * static_cast<long>(failures.size()), bytes);
        return;
    }
    Gateway gateway = build_gateway(*io.cfg);
    ErrorClassification classification = classify_errors(failures, gateway, "judge", prompt);
    write_text_file(o.out, ojson(classification.breakdown).dump(2) + "\n");
    if (!o.labels.empty()) {
        std::string buf;
        for (const auto& l : classification.labels) {
            buf += ojson{{"id", l.id}, {"label", to_string(l.label)}}.dump();
            buf += '\n';
        }
        write_text_file(o.labels, buf);
    }
    write_meta(o.out, "analyze errors", io.argv, *io.cfg, {{prompt.name, prompt.hash()}});
    print_json(ojson(classification.breakdown));
}

struct AnalyzeTokensOpts {
    std::string sequences, transcripts, out;
};

void cmd_analyze_tokens(const AnalyzeTokensOpts& o, const CommonIo& io) {
    LengthStats stats;
    if (!o.sequences.empty()) {
        stats = token_stats(load_records<TrainingSequence>(o.sequences));
    } else if (!o.transcripts.empty()) {
        std::vector<std::string> generations;
        for (const ojson& j : detail::parse_jsonl(o.transcripts)) {
            Transcript t = j.get<Transcript>();
            for (auto it = t.turns.rbegin(); it != t.turns.rend(); ++it) {
                if (it->role == Role::assistant) {
                    generations.push_back(it->content);
                    break;
                }
            }
        }
        stats.mean_test_tokens = mean_token_count(generations, {});
        stats.counter_id = "whitespace";
    } else {
        throw Error("analyze tokens needs --sequences or --transcripts");
    }
    write_text_file(o.out, ojson(stats).dump(2) + "\n");
    write_meta(o.out, "analyze tokens", io.argv, *io.cfg);
    print_json(ojson(stats));
}

struct AnalyzeReportOpts {
    std::vector<std::string> metrics;
    std::string out, table;
};

void cmd_analyze_report(const AnalyzeReportOpts& o, const CommonIo& io) {
    std::vector<MetricsDoc> docs;
    for (const auto& path : o.metrics) {
        docs.push_back(ojson::parse(read_text_file(path)).get<MetricsDoc>());
    }
    ojson summary = merge_metrics(docs);
    std::string table = render_report_table(summary);
    write_text_file(o.out, summary.dump(2) + "\n");
    if (!o.table.empty()) write_text_file(o.table, table);
    write_meta(o.out, "analyze report", io.argv, *io.cfg);
    std::cout << table;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reflection-augmented math training data toolkit"};
    app.require_subcommand(1);

    ToolConfig cfg;
    std::optional<std::string> flag_config, flag_cache_dir, flag_cache_mode, flag_prompts_dir;
    std::optional<int> flag_parallelism;
    std::optional<std::uint64_t> flag_seed;
    std::map<std::string, std::optional<std::string>> flag_urls, flag_models;
    for (const char* id : kEndpointIds) {
        flag_urls[id];
        flag_models[id];
    }

    app.add_option("--config", flag_config, "JSON config file");
    app.add_option("--cache-dir", flag_cache_dir, "record/replay cache directory");
    app.add_option("--cache-mode", flag_cache_mode, "off | readwrite | replay");
    app.add_option("--prompts-dir", flag_prompts_dir, "prompt template directory");
    app.add_option("--parallelism", flag_parallelism, "max in-flight gateway requests");
    app.add_option("--seed", flag_seed, "seed for all randomized commands");
    app.add_flag("--dry-run", cfg.dry_run,
                 "print planned gateway calls and prompt sizes, no network");
    for (const char* id : kEndpointIds) {
        app.add_option(std::string("--") + id + "-url", flag_urls[id],
                       std::string(id) + " endpoint base URL");
        app.add_option(std::string("--") + id + "-model", flag_models[id],
                       std::string(id) + " endpoint model name");
    }

    CommonIo io;
    io.cfg = &cfg;
    for (int i = 0; i < argc; ++i) io.argv.emplace_back(argv[i]);

    std::vector<std::pair<CLI::App*, std::function<void()>>> handlers;

    // ingest
    auto ingest_opts = std::make_shared<IngestOpts>();
    CLI::App* ingest = app.add_subcommand("ingest", "convert a source dataset to toolkit records");
    ingest->add_option("--in", ingest_opts->in)->required();
    ingest->add_option("--format", ingest_opts->format, "gsm8k_jsonl | math_jsonl | toolkit_jsonl")
        ->required();
    ingest->add_option("--split", ingest_opts->split, "train | test");
    ingest->add_option("--out", ingest_opts->out)->required();
    ingest->add_option("--errors", ingest_opts->errors, "line-error report path");
    ingest->add_flag("--skip-malformed", ingest_opts->skip_malformed,
                     "collect bad lines instead of failing fast");
    handlers.emplace_back(ingest, [ingest_opts, &io] { cmd_ingest(*ingest_opts, io); });

    // augment
    CLI::App* augment = app.add_subcommand("augment", "produce synthetic data via the gateway");
    augment->require_subcommand(1);
    auto add_augment = [&](const char* name, const char* help,
                           void (*fn)(const AugmentOpts&, const CommonIo&)) {
        auto opts = std::make_shared<AugmentOpts>();
        CLI::App* sub = augment->add_subcommand(name, help);
        sub->add_option("--in", opts->in)->required();
        sub->add_option("--out", opts->out)->required();
        if (std::string(name) != "metamath-sample") {
            sub->add_option("--prompt", opts->prompt, "prompt template override");
            sub->add_option("--failures", opts->failures, "failure report path");
        }
        if (std::string(name) == "aaug") {
            sub->add_option("--max-attempts", opts->max_attempts);
            sub->add_flag("--verified-only", opts->verified_only);
        }
        if (std::string(name) == "metamath-sample") {
            sub->add_option("--rounds", opts->rounds, "instances per (seed, technique)");
        }
        handlers.emplace_back(sub, [opts, fn, &io] { fn(*opts, io); });
    };
    add_augment("refaug", "annotate reflective sections", cmd_augment_refaug);
    add_augment("qaug", "question augmentation", cmd_augment_qaug);
    add_augment("aaug", "answer augmentation (gold-checked re-sampling)", cmd_augment_aaug);
    add_augment("metamath-sample", "uniform per-technique subset sampling", cmd_augment_metamath);

    // build
    CLI::App* build = app.add_subcommand("build", "render trainer-ready sequences");
    build->require_subcommand(1);
    {
        auto opts = std::make_shared<BuildOpts>();
        CLI::App* sub = build->add_subcommand("standard", "single-round QA sequences");
        sub->add_option("--in", opts->in)->required();
        sub->add_option("--out", opts->out)->required();
        sub->add_option("--lineage", opts->lineage, "lineage tag for the output");
        sub->add_option("--system-prompt", opts->system_prompt, "optional system prompt text");
        handlers.emplace_back(sub, [opts, &io] { cmd_build_standard(*opts, io); });
    }
    for (const char* name : {"refaug", "front"}) {
        auto opts = std::make_shared<BuildOpts>();
        CLI::App* sub = build->add_subcommand(
            name, std::string(name) == "refaug" ? "reflection appended after the answer"
                                                : "reflection placed before the answer");
        sub->add_option("--in", opts->in)->required();
        sub->add_option("--reflections", opts->reflections)->required();
        sub->add_option("--out", opts->out)->required();
        sub->add_option("--system-prompt", opts->system_prompt, "optional system prompt text");
        Placement placement = std::string(name) == "refaug" ? Placement::tail : Placement::front;
        handlers.emplace_back(sub,
                              [opts, placement, &io] { cmd_build_refaug(*opts, io, placement); });
    }
    {
        auto opts = std::make_shared<BuildOpts>();
        CLI::App* sub = build->add_subcommand("mix", "proportion-mixed reflected/standard set");
        sub->add_option("--in", opts->in)->required();
        sub->add_option("--reflections", opts->reflections)->required();
        sub->add_option("--p", opts->proportion, "fraction rendered with reflections")->required();
        sub->add_option("--out", opts->out)->required();
        sub->add_option("--system-prompt", opts->system_prompt, "optional system prompt text");
        handlers.emplace_back(sub, [opts, &io] { cmd_build_mix(*opts, io); });
    }
    {
        auto opts = std::make_shared<BuildManifestOpts>();
        CLI::App* sub = build->add_subcommand("manifest", "trainer manifest with defaults");
        sub->add_option("--preset", opts->preset, "standard | metamath_full | continual");
        sub->add_option("--dataset", opts->datasets, "dataset file path (repeatable)");
        sub->add_option("--counts-from", opts->counts_from, "sequence file to count lineages");
        sub->add_option("--out", opts->out)->required();
        handlers.emplace_back(sub, [opts, &io] { cmd_build_manifest(*opts, io); });
    }

    // grade
    auto grade_opts = std::make_shared<GradeOpts>();
    CLI::App* grade = app.add_subcommand("grade", "grade model generations against gold");
    grade->add_option("--generations", grade_opts->generations,
                      "jsonl with {\"id\",\"generation\"}")
        ->required();
    grade->add_option("--dataset", grade_opts->dataset)->required();
    grade->add_option("--out", grade_opts->out)->required();
    grade->add_option("--stop", grade_opts->stop, "termination string");
    grade->add_option("--metrics", grade_opts->metrics, "metrics doc output");
    grade->add_option("--run-name", grade_opts->run_name);
    handlers.emplace_back(grade, [grade_opts, &io] { cmd_grade(*grade_opts, io); });

    // decontaminate
    auto decon_opts = std::make_shared<DecontaminateOpts>();
    CLI::App* decon = app.add_subcommand("decontaminate", "n-gram overlap check");
    decon->add_option("--train", decon_opts->train)->required();
    decon->add_option("--test", decon_opts->test)->required();
    decon->add_option("--refaug", decon_opts->refaug, "reflective sections jsonl");
    decon->add_option("--n-question", decon_opts->n_question);
    decon->add_option("--n-answer", decon_opts->n_answer);
    decon->add_option("--out", decon_opts->out)->required();
    decon->add_option("--summary", decon_opts->summary, "summary json output");
    handlers.emplace_back(decon, [decon_opts, &io] { cmd_decontaminate(*decon_opts, io); });

    // eval
    CLI::App* eval = app.add_subcommand("eval", "run an evaluation protocol");
    eval->require_subcommand(1);
    auto add_eval = [&](const char* name, const char* help,
                        void (*fn)(const EvalOpts&, const CommonIo&)) {
        auto opts = std::make_shared<EvalOpts>();
        CLI::App* sub = eval->add_subcommand(name, help);
        sub->add_option("--dataset", opts->dataset)->required();
        sub->add_option("--out", opts->out)->required();
        sub->add_option("--transcripts", opts->transcripts, "full-turn transcript log");
        sub->add_option("--metrics", opts->metrics, "metrics doc output");
        sub->add_option("--run-name", opts->run_name);
        sub->add_option("--stop", opts->stop, "termination string");
        sub->add_option("--max-tokens", opts->max_tokens);
        if (std::string(name) == "fqa" || std::string(name) == "ec") {
            sub->add_flag("--flat-history", opts->flat_history,
                          "concatenate turns into one user message");
        }
        if (std::string(name) == "mint") {
            sub->add_option("--k", opts->k, "max proposal turns");
            sub->add_option("--feedback-prompt", opts->feedback_prompt);
        }
        handlers.emplace_back(sub, [opts, fn, &io] { fn(*opts, io); });
    };
    add_eval("single", "single-round QA", cmd_eval_single);
    add_eval("fqa", "three-turn follow-up QA", cmd_eval_fqa);
    add_eval("ec", "error correction", cmd_eval_ec);
    add_eval("mint", "feedback-utilization loop", cmd_eval_mint);

    // analyze
    CLI::App* analyze = app.add_subcommand("analyze", "post-run analyses and reports");
    analyze->require_subcommand(1);
    {
        auto opts = std::make_shared<AnalyzeErrorsOpts>();
        CLI::App* sub = analyze->add_subcommand("errors", "error-taxonomy classification");
        sub->add_option("--results", opts->results)->required();
        sub->add_option("--transcripts", opts->transcripts)->required();
        sub->add_option("--dataset", opts->dataset)->required();
        sub->add_option("--out", opts->out)->required();
        sub->add_option("--labels", opts->labels, "per-instance label output");
        sub->add_option("--prompt", opts->prompt, "prompt template override");
        handlers.emplace_back(sub, [opts, &io] { cmd_analyze_errors(*opts, io); });
    }
    {
        auto opts = std::make_shared<AnalyzeTokensOpts>();
        CLI::App* sub = analyze->add_subcommand("tokens", "sequence length statistics");
        sub->add_option("--sequences", opts->sequences, "training sequence jsonl");
        sub->add_option("--transcripts", opts->transcripts, "eval transcript jsonl");
        sub->add_option("--out", opts->out)->required();
        handlers.emplace_back(sub, [opts, &io] { cmd_analyze_tokens(*opts, io); });
    }
    {
        auto opts = std::make_shared<AnalyzeReportOpts>();
        CLI::App* sub = analyze->add_subcommand("report", "merge metrics into one summary");
        sub->add_option("--metrics", opts->metrics, "metrics doc path (repeatable)")->required();
        sub->add_option("--out", opts->out)->required();
        sub->add_option("--table", opts->table, "aligned text table output");
        handlers.emplace_back(sub, [opts, &io] { cmd_analyze_report(*opts, io); });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        // defaults < config file < env < flags
        std::optional<std::string> config_path = flag_config;
        if (!config_path) config_path = env_string("REFAUG_CONFIG");
        if (config_path) apply_config_file(cfg, *config_path);
        apply_env(cfg);
        if (flag_cache_dir) cfg.cache_dir = *flag_cache_dir;
        if (flag_cache_mode) cfg.cache_mode = *flag_cache_mode;
        if (flag_prompts_dir) cfg.prompts_dir = *flag_prompts_dir;
        if (flag_parallelism) cfg.parallelism = *flag_parallelism;
        if (flag_seed) cfg.seed = *flag_seed;
        for (const char* id : kEndpointIds) {
            if (flag_urls[id]) cfg.endpoints[id].base_url = *flag_urls[id];
            if (flag_models[id]) cfg.endpoints[id].model = *flag_models[id];
        }

        for (auto& [sub, handler] : handlers) {
            if (sub->parsed()) {
                handler();
                return 0;
            }
        }
        throw Error("no command selected");
    } catch (const std::exception& e) {
        std::cerr << ojson{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
}
