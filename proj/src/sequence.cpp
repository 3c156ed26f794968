#include "refaug/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "refaug/util.hpp"

namespace refaug {
namespace {

class SequenceError : public Error {
public:
    using Error::Error;
};

/// Drops a final "#### x" answer marker line, if one ends the solution.
std::string strip_final_marker(std::string_view body) {
    static constexpr std::string_view marker = "#### ";
    auto pos = body.rfind(marker);
    if (pos == std::string_view::npos) return std::string(body);
    if (pos != 0 && body[pos - 1] != '\n') return std::string(body);
    // Only the final line may be a marker line.
    if (body.find('\n', pos) != std::string_view::npos &&
        !trim(body.substr(body.find('\n', pos))).empty()) {
        return std::string(body);
    }
    return std::string(rtrim(body.substr(0, pos)));
}

int estimate_tokens(const TrainingSequence& seq) {
    return count_ws_tokens(seq.input) + count_ws_tokens(seq.output);
}

std::string render_reflection_body(const ReflectiveSection& reflection) {
    if (trim(reflection.alternative).empty() || trim(reflection.follow_up).empty()) {
        throw SequenceError("reflection for '" + reflection.seed_id + "' has empty fields");
    }
    std::string body =
        std::string(trim(reflection.alternative)) + "\n\n" + std::string(trim(reflection.follow_up));
    if (body.find(kReflectionTerminator) != std::string::npos) {
        throw SequenceError("reflection for '" + reflection.seed_id +
                            "' contains the terminator string");
    }
    return body;
}

}  // namespace

std::string strip_calculator_annotations(std::string_view solution) {
    std::string out;
    out.reserve(solution.size());
    std::size_t pos = 0;
    while (pos < solution.size()) {
        auto open = solution.find("<<", pos);
        if (open == std::string_view::npos) {
            out.append(solution.substr(pos));
            break;
        }
        auto close = solution.find(">>", open + 2);
        if (close == std::string_view::npos) {  // unbalanced: keep verbatim
            out.append(solution.substr(pos));
            break;
        }
        out.append(solution.substr(pos, open - pos));
        pos = close + 2;
    }
    return out;
}

TrainingSequence render_standard(const MathInstance& instance, Lineage lineage,
                                 std::string_view system_prompt) {
    if (trim(instance.solution).empty()) {
        throw SequenceError("instance '" + instance.id + "' has an empty solution");
    }

    std::string body = strip_calculator_annotations(instance.solution);
    if (body.find(kReflectionTerminator) != std::string::npos) {
        throw SequenceError("instance '" + instance.id +
                            "' contains the terminator string in its solution");
    }
    body = strip_final_marker(body);
    body = std::string(rtrim(body));

    std::string suffix = std::string(kAnswerPrefix) + instance.final_answer + ".";
    if (!body.ends_with(suffix)) {
        if (!body.empty()) body += "\n";
        body += suffix;
    }

    TrainingSequence seq;
    seq.id = instance.id;
    if (!system_prompt.empty()) {
        seq.input = std::string(kSystemMarker) + std::string(system_prompt) + "\n";
    }
    seq.input += std::string(kUserMarker) + instance.question + "\n" + std::string(kAssistantMarker);
    seq.output = body;
    seq.loss_boundary = static_cast<int>(seq.input.size());
    seq.lineage = lineage;
    seq.token_estimate = estimate_tokens(seq);
    return seq;
}

TrainingSequence render_refaug(const MathInstance& instance, const ReflectiveSection& reflection,
                               Placement placement, std::string_view system_prompt) {
    TrainingSequence seq = render_standard(instance, Lineage::standard, system_prompt);
    std::string reflection_body = render_reflection_body(reflection);

    if (placement == Placement::tail) {
        seq.output += std::string(kReflectionJoiner) + reflection_body;
        seq.lineage = Lineage::refaug_tail;
    } else {
        seq.output = reflection_body + "\n\n" + seq.output;
        seq.lineage = Lineage::refaug_front;
    }
    seq.token_estimate = estimate_tokens(seq);
    return seq;
}

void to_json(ojson& j, const MixPlan& p) {
    j = ojson{{"proportion", p.proportion},
              {"rng_seed", p.rng_seed},
              {"reflected", p.reflected},
              {"standard", p.standard}};
}

std::pair<std::vector<TrainingSequence>, MixPlan> mix(
    const std::vector<MathInstance>& instances,
    const std::map<std::string, ReflectiveSection>& reflections, double p, std::uint64_t seed,
    std::string_view system_prompt) {
    if (p < 0.0 || p > 1.0) throw Error("mix: proportion must be in [0, 1]");

    const auto n = instances.size();
    const auto reflected = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<bool> use_reflection(n, false);
    for (std::size_t i = 0; i < reflected; ++i) use_reflection[order[i]] = true;

    std::vector<TrainingSequence> sequences;
    sequences.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const MathInstance& instance = instances[i];
        if (use_reflection[i]) {
            auto it = reflections.find(instance.id);
            if (it == reflections.end()) {
                throw Error("mix: no reflection available for instance '" + instance.id + "'");
            }
            sequences.push_back(
                render_refaug(instance, it->second, Placement::tail, system_prompt));
        } else {
            sequences.push_back(render_standard(instance, Lineage::standard, system_prompt));
        }
    }
    std::shuffle(sequences.begin(), sequences.end(), rng);

    MixPlan plan;
    plan.proportion = p;
    plan.rng_seed = seed;
    plan.reflected = static_cast<int>(reflected);
    plan.standard = static_cast<int>(n - reflected);
    return {std::move(sequences), plan};
}

ManifestPreset manifest_preset_from_string(std::string_view s) {
    if (s == "standard") return ManifestPreset::standard;
    if (s == "metamath_full") return ManifestPreset::metamath_full;
    if (s == "continual") return ManifestPreset::continual;
    throw Error("unknown manifest preset: '" + std::string(s) + "'");
}

ojson emit_manifest(const ManifestOptions& options) {
    double lr = 1e-5;
    int epochs = 3;
    switch (options.preset) {
        case ManifestPreset::standard: break;
        case ManifestPreset::metamath_full: lr = 2e-6; break;
        case ManifestPreset::continual:
            lr = 1e-6;
            epochs = 1;
            break;
    }
    ojson counts = ojson::object();
    for (const auto& [lineage, count] : options.lineage_counts) counts[lineage] = count;
    return ojson{{"datasets", options.dataset_paths},
                 {"lineage_counts", counts},
                 {"hyperparameters",
                  ojson{{"epochs", epochs},
                        {"batch_size", 128},
                        {"learning_rate", lr},
                        {"warmup_ratio", 0.03},
                        {"lr_schedule", "linear"},
                        {"min_lr_ratio", 0.2},
                        {"max_seq_len", 4096},
                        {"precision", "bfloat16"}}}};
}

}  // namespace refaug
