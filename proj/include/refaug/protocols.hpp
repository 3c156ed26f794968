#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "refaug/gateway.hpp"
#include "refaug/grading.hpp"
#include "refaug/prompt.hpp"
#include "refaug/records.hpp"

namespace refaug {

enum class Protocol { single, fqa, ec, mint };
std::string to_string(Protocol v);

struct TranscriptTurn {
    Role role = Role::user;
    std::string content;
    bool operator==(const TranscriptTurn&) const = default;
};

struct Transcript {
    std::string instance_id;
    Protocol protocol = Protocol::single;
    std::vector<TranscriptTurn> turns;
};

void to_json(ojson& j, const Transcript& t);
void from_json(const ojson& j, Transcript& t);

struct RunOptions {
    std::string endpoint = "model";
    std::string stop = "Reflection:";
    double temperature = 0.0;  // greedy inference
    double top_p = 1.0;
    int max_tokens = 1024;
    // Render multi-turn history as one flat user message instead of chat
    // turns (comparability switch for harnesses that concatenate).
    bool flat_history = false;
};

struct SingleRunResult {
    ScoreSummary summary;
    std::vector<GradeResult> results;
    std::vector<Transcript> transcripts;
};

/// One stop-string generation per instance, graded against gold. Gateway
/// failures become no_answer verdicts with the error noted in the result.
SingleRunResult run_single_round(Gateway& gateway, const std::vector<MathInstance>& dataset,
                                 const RunOptions& options = {});

struct FqaInstance {
    std::string id;
    std::array<std::string, 3> questions;
    std::array<std::string, 3> golds;
};

std::vector<FqaInstance> load_fqa_dataset(const std::filesystem::path& path);
void save_fqa_dataset(const std::vector<FqaInstance>& instances, const std::filesystem::path& path);

struct FqaRunResult {
    std::array<double, 3> turn_accuracy{};
    std::vector<std::array<GradeResult, 3>> results;
    std::vector<Transcript> transcripts;
};

/// Three chained turns; the model's own (truncated) generations become the
/// context of later turns. Turn accuracies are independent.
FqaRunResult run_fqa(Gateway& gateway, const std::vector<FqaInstance>& dataset,
                     const RunOptions& options = {});

struct EcInstance {
    std::string id;
    std::string question;
    std::string wrong_answer;
    std::string gold;
};

std::vector<EcInstance> load_ec_dataset(const std::filesystem::path& path);
void save_ec_dataset(const std::vector<EcInstance>& instances, const std::filesystem::path& path);

/// Fixed binary feedback shown to the model after the planted wrong answer.
inline constexpr std::string_view kEcFeedback =
    "Your answer is incorrect. Please identify the error and solve the problem again.";

/// Binary incorrectness sentence prepended to expert feedback in MINT turns.
inline constexpr std::string_view kMintIncorrect = "Your answer is incorrect.";

struct EcRunResult {
    double accuracy = 0.0;
    std::vector<GradeResult> results;
    std::vector<Transcript> transcripts;
};

/// Transcript [user q, assistant wrong answer, user feedback], then one
/// correction graded against gold.
EcRunResult run_ec(Gateway& gateway, const std::vector<EcInstance>& dataset,
                   const RunOptions& options = {});

struct MintInstance {
    std::string id;
    std::string question;
    std::string gold;
    std::string source;
};

// Composition of the published math subset this protocol targets:
// 48 gsm8k + 100 math + 76 mmlu + 49 theoremqa = 273 instances.
inline constexpr int kMintMathSubsetGsm8k = 48;
inline constexpr int kMintMathSubsetMath = 100;
inline constexpr int kMintMathSubsetMmlu = 76;
inline constexpr int kMintMathSubsetTheoremQa = 49;
inline constexpr std::size_t kMintMathSubsetTotal = 273;

std::vector<MintInstance> load_mint_dataset(const std::filesystem::path& path);
void save_mint_dataset(const std::vector<MintInstance>& instances,
                       const std::filesystem::path& path);

struct MintOutcome {
    std::string id;
    std::vector<bool> per_turn_correct;  // stops at the solving turn
    std::optional<int> solved_at;        // 1-based turn index
    std::vector<std::string> feedback;   // expert feedback per failed turn
};

void to_json(ojson& j, const MintOutcome& o);

struct MintOptions {
    RunOptions run;
    std::string expert_endpoint = "expert";
    int k = 5;
    int expert_max_tokens = 512;
};

struct MintRunResult {
    std::vector<double> cumulative_accuracy;  // index t-1 = solved within <= t turns
    double delta = 0.0;                       // acc(k) - acc(1)
    std::vector<MintOutcome> outcomes;
    std::vector<Transcript> transcripts;
};

/// Propose/grade/feedback loop with at most k proposals per instance.
/// Expert failures degrade to empty feedback; the loop continues.
MintRunResult run_mint(Gateway& gateway, const std::vector<MintInstance>& dataset,
                       const PromptTemplate& feedback_prompt, const MintOptions& options = {});

}  // namespace refaug
