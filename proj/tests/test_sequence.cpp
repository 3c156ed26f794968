#include <doctest.h>

#include <map>
#include <set>

#include "refaug/grading.hpp"
#include "refaug/sequence.hpp"

using namespace refaug;

TEST_SUITE_BEGIN("sequence");

namespace {

MathInstance make_instance(std::string id, std::string question, std::string solution,
                           std::string final_answer) {
    MathInstance m;
    m.id = std::move(id);
    m.question = std::move(question);
    m.solution = std::move(solution);
    m.final_answer = std::move(final_answer);
    return m;
}

ReflectiveSection make_reflection(const std::string& seed_id) {
    ReflectiveSection s;
    s.id = seed_id + "::reflection";
    s.seed_id = seed_id;
    s.alternative = "Alternatively, group the terms and count pairs.";
    s.follow_up_kind = FollowUpKind::analogy;
    s.follow_up = "Now solve the same task with 100 items instead.";
    s.annotator = "mock";
    s.raw = "unused";
    return s;
}

}  // namespace

TEST_CASE("render_standard applies the chat template and answer suffix") {
    TrainingSequence seq = render_standard(make_instance("i1", "2+2?", "2+2=4", "4"));
    CHECK(seq.input == "<|user|>\n2+2?\n<|assistant|>\n");
    CHECK(seq.output == "2+2=4\nThe answer is 4.");
    CHECK(seq.loss_boundary == static_cast<int>(seq.input.size()));
    CHECK(seq.lineage == Lineage::standard);
    CHECK(seq.id == "i1");
}

TEST_CASE("answer suffix is not duplicated") {
    TrainingSequence seq =
        render_standard(make_instance("i1", "2+2?", "2+2=4\nThe answer is 4.", "4"));
    CHECK(seq.output == "2+2=4\nThe answer is 4.");
}

TEST_CASE("calculator annotations and the #### marker are stripped") {
    std::string solution = "He buys 2+2=<<2+2=4>>4 apples.\nThen <<4*3=12>>12 total.\n#### 12";
    TrainingSequence seq = render_standard(make_instance("i1", "q", solution, "12"));
    // oracle: manual removal of both <<..>> spans and the marker line
    CHECK(seq.output == "He buys 2+2=4 apples.\nThen 12 total.\nThe answer is 12.");
    CHECK(seq.output.find("<<") == std::string::npos);
    CHECK(seq.output.find("####") == std::string::npos);

    CHECK(strip_calculator_annotations("a<<1+1=2>>b<<unclosed") == "ab<<unclosed");
    CHECK(strip_calculator_annotations("plain") == "plain");
}

TEST_CASE("interior #### lines are kept") {
    std::string solution = "#### is a header artifact\nreal steps\n#### 9";
    TrainingSequence seq = render_standard(make_instance("i1", "q", solution, "9"));
    CHECK(seq.output == "#### is a header artifact\nreal steps\nThe answer is 9.");
}

TEST_CASE("empty solutions and terminator collisions are rejected") {
    CHECK_THROWS_AS(render_standard(make_instance("i1", "q", "  ", "1")), Error);
    CHECK_THROWS_WITH_AS(
        render_standard(make_instance("i1", "q", "uses Reflection: inside", "1")),
        doctest::Contains("terminator"), Error);
}

TEST_CASE("tail placement appends one terminated reflective section") {
    MathInstance inst = make_instance("i1", "2+2?", "2+2=4", "4");
    ReflectiveSection reflection = make_reflection("i1");
    TrainingSequence standard = render_standard(inst);
    TrainingSequence tail = render_refaug(inst, reflection, Placement::tail);

    CHECK(tail.lineage == Lineage::refaug_tail);
    // construction inverse
    std::string recovered = truncate_at_stop(tail.output, "Reflection:");
    CHECK(std::string(rtrim(recovered)) == std::string(rtrim(standard.output)));
    // exactly one terminator, preceded by the complete standard answer
    auto first = tail.output.find("Reflection:");
    REQUIRE(first != std::string::npos);
    CHECK(tail.output.find("Reflection:", first + 1) == std::string::npos);
    CHECK(tail.output.substr(0, first).find("The answer is 4.") != std::string::npos);
    // both reflection blocks present
    CHECK(tail.output.find(reflection.alternative) != std::string::npos);
    CHECK(tail.output.find(reflection.follow_up) != std::string::npos);
}

TEST_CASE("front placement keeps the answer sentence terminal and unique") {
    MathInstance inst = make_instance("i1", "2+2?", "2+2=4", "4");
    TrainingSequence front = render_refaug(inst, make_reflection("i1"), Placement::front);

    CHECK(front.lineage == Lineage::refaug_front);
    CHECK(front.output.find("Reflection:") == std::string::npos);
    auto first = front.output.find("The answer is");
    REQUIRE(first != std::string::npos);
    CHECK(front.output.find("The answer is", first + 1) == std::string::npos);
    CHECK(front.output.ends_with("The answer is 4."));
}

TEST_CASE("reflective sequences are longer than standard ones") {
    MathInstance inst = make_instance("i1", "2+2?", "2+2=4", "4");
    TrainingSequence standard = render_standard(inst);
    TrainingSequence tail = render_refaug(inst, make_reflection("i1"), Placement::tail);
    CHECK(tail.token_estimate > standard.token_estimate);
}

TEST_CASE("reflections with empty fields or terminators are rejected") {
    MathInstance inst = make_instance("i1", "q", "body", "1");
    ReflectiveSection bad = make_reflection("i1");
    bad.follow_up = "   ";
    CHECK_THROWS_AS(render_refaug(inst, bad, Placement::tail), Error);

    ReflectiveSection collides = make_reflection("i1");
    collides.alternative = "this mentions Reflection: explicitly";
    CHECK_THROWS_AS(render_refaug(inst, collides, Placement::tail), Error);
}

TEST_CASE("system prompt hook prepends its own marker") {
    MathInstance inst = make_instance("i1", "2+2?", "2+2=4", "4");
    TrainingSequence plain = render_standard(inst);
    CHECK(plain.input.find("<|system|>") == std::string::npos);

    TrainingSequence with_system = render_standard(inst, Lineage::standard, "Be concise.");
    CHECK(with_system.input == "<|system|>\nBe concise.\n<|user|>\n2+2?\n<|assistant|>\n");
    CHECK(with_system.loss_boundary == static_cast<int>(with_system.input.size()));
    CHECK(with_system.output == plain.output);

    TrainingSequence tail = render_refaug(inst, make_reflection("i1"), Placement::tail,
                                          "Be concise.");
    CHECK(tail.input == with_system.input);
}

TEST_CASE("render functions are pure") {
    MathInstance inst = make_instance("i1", "2+2?", "2+2=4", "4");
    CHECK(render_standard(inst) == render_standard(inst));
    CHECK(render_refaug(inst, make_reflection("i1"), Placement::tail) ==
          render_refaug(inst, make_reflection("i1"), Placement::tail));
}

TEST_CASE("mix honors the proportion exactly and deterministically") {
    std::vector<MathInstance> instances;
    std::map<std::string, ReflectiveSection> reflections;
    for (int i = 0; i < 10; ++i) {
        std::string id = "i" + std::to_string(i);
        instances.push_back(make_instance(id, "q" + std::to_string(i), "s=" + std::to_string(i), "1"));
        reflections[id] = make_reflection(id);
    }

    SUBCASE("p=0 renders everything standard") {
        auto [seqs, plan] = mix(instances, reflections, 0.0, 42);
        CHECK(plan.reflected == 0);
        CHECK(plan.standard == 10);
        for (const auto& s : seqs) CHECK(s.lineage == Lineage::standard);
    }

    SUBCASE("p=1 reflects everything") {
        auto [seqs, plan] = mix(instances, reflections, 1.0, 42);
        CHECK(plan.reflected == 10);
        for (const auto& s : seqs) CHECK(s.lineage == Lineage::refaug_tail);
    }

    SUBCASE("p=0.5 reflects exactly half, stable under the seed") {
        auto [seqs_a, plan_a] = mix(instances, reflections, 0.5, 7);
        auto [seqs_b, plan_b] = mix(instances, reflections, 0.5, 7);
        CHECK(plan_a.reflected == 5);
        CHECK(plan_a.standard == 5);
        REQUIRE(seqs_a.size() == seqs_b.size());
        for (std::size_t i = 0; i < seqs_a.size(); ++i) CHECK(seqs_a[i] == seqs_b[i]);

        // partition property: the union of both lineages is the input set
        std::set<std::string> reflected_ids, standard_ids;
        for (const auto& s : seqs_a) {
            (s.lineage == Lineage::refaug_tail ? reflected_ids : standard_ids).insert(s.id);
        }
        CHECK(reflected_ids.size() == 5);
        CHECK(standard_ids.size() == 5);
        std::set<std::string> all;
        all.insert(reflected_ids.begin(), reflected_ids.end());
        all.insert(standard_ids.begin(), standard_ids.end());
        CHECK(all.size() == 10);
    }

    SUBCASE("missing reflection for a selected instance is an error") {
        std::map<std::string, ReflectiveSection> partial;
        CHECK_THROWS_WITH_AS(mix(instances, partial, 1.0, 3), doctest::Contains("no reflection"),
                             Error);
    }

    SUBCASE("proportion bounds are validated") {
        CHECK_THROWS_AS(mix(instances, reflections, -0.1, 3), Error);
        CHECK_THROWS_AS(mix(instances, reflections, 1.1, 3), Error);
    }
}

TEST_CASE("manifest presets pin the published hyperparameters") {
    ManifestOptions options;
    options.dataset_paths = {"train.jsonl"};
    options.lineage_counts = {{"standard", 5000}, {"refaug_tail", 2500}};

    ojson manifest = emit_manifest(options);
    CHECK(manifest.at("hyperparameters").at("learning_rate").get<double>() ==
          doctest::Approx(1e-5));
    CHECK(manifest.at("hyperparameters").at("warmup_ratio").get<double>() == doctest::Approx(0.03));
    CHECK(manifest.at("hyperparameters").at("epochs") == 3);
    CHECK(manifest.at("hyperparameters").at("batch_size") == 128);
    CHECK(manifest.at("hyperparameters").at("max_seq_len") == 4096);
    CHECK(manifest.at("hyperparameters").at("min_lr_ratio").get<double>() == doctest::Approx(0.2));
    CHECK(manifest.at("lineage_counts").at("refaug_tail") == 2500);

    options.preset = ManifestPreset::metamath_full;
    CHECK(emit_manifest(options).at("hyperparameters").at("learning_rate").get<double>() ==
          doctest::Approx(2e-6));

    options.preset = ManifestPreset::continual;
    ojson continual = emit_manifest(options);
    CHECK(continual.at("hyperparameters").at("learning_rate").get<double>() == doctest::Approx(1e-6));
    CHECK(continual.at("hyperparameters").at("epochs") == 1);
}

TEST_SUITE_END();
