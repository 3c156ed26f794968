#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "refaug/records.hpp"

namespace refaug {

// Chat template markers and the reflective-section terminator. The joiner is
// bit-exact so that truncating a tail sequence at the terminator recovers the
// standard output.
inline constexpr std::string_view kSystemMarker = "<|system|>\n";
inline constexpr std::string_view kUserMarker = "<|user|>\n";
inline constexpr std::string_view kAssistantMarker = "<|assistant|>\n";
inline constexpr std::string_view kReflectionTerminator = "Reflection:";
inline constexpr std::string_view kReflectionJoiner = "\n\nReflection:\n";
inline constexpr std::string_view kAnswerPrefix = "The answer is ";

/// Removes calculator annotations (<<...>>) from a solution body.
std::string strip_calculator_annotations(std::string_view solution);

/// Renders the single-round supervised pair: user/assistant chat template,
/// solution body with calculator markup and any final "#### x" marker
/// removed, and a terminal "The answer is {final_answer}." sentence (added
/// only when not already present). `lineage` tags the data recipe the
/// instance came from; rendering itself is identical for all of them. The
/// template ships with no system prompt; a non-empty `system_prompt` is
/// prepended under its own marker.
TrainingSequence render_standard(const MathInstance& instance, Lineage lineage = Lineage::standard,
                                 std::string_view system_prompt = {});

enum class Placement { tail, front };

/// Appends (tail) or prepends (front) the reflective section. Tail output is
/// standard output + "\n\nReflection:\n" + section; front output is the
/// section + blank line + standard output with no terminator anywhere.
TrainingSequence render_refaug(const MathInstance& instance, const ReflectiveSection& reflection,
                               Placement placement, std::string_view system_prompt = {});

struct MixPlan {
    double proportion = 0.0;
    std::uint64_t rng_seed = 0;
    int reflected = 0;
    int standard = 0;
};

void to_json(ojson& j, const MixPlan& p);

/// Renders round(p*N) uniformly chosen instances as tail sequences and the
/// rest as standard, then shuffles the combined order. Deterministic in
/// (instances, reflections, p, seed).
std::pair<std::vector<TrainingSequence>, MixPlan> mix(
    const std::vector<MathInstance>& instances,
    const std::map<std::string, ReflectiveSection>& reflections, double p, std::uint64_t seed,
    std::string_view system_prompt = {});

enum class ManifestPreset { standard, metamath_full, continual };
ManifestPreset manifest_preset_from_string(std::string_view s);

struct ManifestOptions {
    ManifestPreset preset = ManifestPreset::standard;
    std::vector<std::string> dataset_paths;
    std::map<std::string, int> lineage_counts;
};

/// Trainer-consumable manifest with the shipped hyperparameter defaults
/// (3 epochs, batch 128, peak lr by preset, 3% warmup, linear decay to 20%
/// of peak, max length 4096).
ojson emit_manifest(const ManifestOptions& options);

}  // namespace refaug
