#include <doctest.h>

#include <numeric>
#include <random>

#include "refaug/grading.hpp"
#include "refaug/prompt.hpp"
#include "support/mock_transport.hpp"

using namespace refaug;
using namespace refaug::testing;
using namespace std::string_view_literals;

TEST_SUITE_BEGIN("grading");

TEST_CASE("truncate_at_stop splits at the terminator") {
    CHECK(truncate_at_stop("The answer is 5.\n\nReflection:\nAlternatively...") ==
          "The answer is 5.\n\n");
    CHECK(truncate_at_stop("no terminator here") == "no terminator here");
    CHECK(truncate_at_stop("Reflection:\nstarts with it") == "");
    CHECK(truncate_at_stop("abcdef", "") == "abcdef");
}

TEST_CASE("truncate_at_stop is idempotent and never leaves the stop string") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        std::string text;
        for (int j = 0; j < 40; ++j) {
            switch (rng() % 5) {
                case 0: text += "Reflection:"; break;
                case 1: text += "Reflect"; break;
                case 2: text += " answer "; break;
                case 3: text += "\n"; break;
                default: text += static_cast<char>('a' + rng() % 26);
            }
        }
        std::string cut = truncate_at_stop(text);
        CHECK(cut.find("Reflection:") == std::string::npos);
        CHECK(truncate_at_stop(cut) == cut);
        // longest such prefix: one more char would either be impossible or
        // complete the stop string
        if (cut.size() < text.size()) {
            std::string longer = text.substr(0, cut.size() + "Reflection:"sv.size());
            CHECK(longer.find("Reflection:") != std::string::npos);
        }
    }
}

TEST_CASE("extract_prediction follows the last answer sentence") {
    CHECK(extract_prediction("The answer is 72.") == "72");
    CHECK(extract_prediction("The answer is 6. Wait. The answer is 8.") == "8");
    CHECK(extract_prediction("the answer is: 12") == "12");
    CHECK(extract_prediction("The answer is 2.5.") == "2.5");
    CHECK(extract_prediction("The answer is $\\frac{1}{2}$.") == "$\\frac{1}{2}$");
    CHECK(extract_prediction("The answer is 3,600. Done.") == "3,600");
}

TEST_CASE("extract_prediction falls back to the last number or boxed token") {
    CHECK(extract_prediction("blah blah 3 then 4") == "4");
    CHECK(extract_prediction("we get \\boxed{42} at the end") == "42");
    CHECK(extract_prediction("number 3 then \\boxed{5}") == "5");
    CHECK(extract_prediction("boxed \\boxed{5} then 9") == "9");
    CHECK(extract_prediction("therefore -7 is left") == "-7");
    CHECK(extract_prediction("no digits at all") == std::nullopt);
    CHECK(extract_prediction("") == std::nullopt);
}

TEST_CASE("normalize_answer canonical forms") {
    CHECK(normalize_answer("3,600") == "3600");
    CHECK(normalize_answer("\\boxed{\\frac{1}{2}}") == "1/2");
    CHECK(normalize_answer("  YES ") == "yes");
    CHECK(normalize_answer("42.0") == "42");
    CHECK(normalize_answer("0.500") == "0.5");
    CHECK(normalize_answer("$5") == "5");
    CHECK(normalize_answer("2/4") == "1/2");
    CHECK(normalize_answer("-\\frac{3}{6}") == "-1/2");
    CHECK(normalize_answer("50%") == "1/2");
    CHECK(normalize_answer("200%") == "2");
    CHECK(normalize_answer("+7") == "7");
    CHECK(normalize_answer("-0.0") == "0");
    CHECK(normalize_answer(".5") == "0.5");
    CHECK(normalize_answer("1,2") == "1,2");  // not a thousands separator
    CHECK(normalize_answer("Two  Birds\n") == "two birds");
    CHECK(normalize_answer("\\$12") == "12");
    CHECK(normalize_answer("12\\%") == "3/25");
}

TEST_CASE("answers_equal uses exact arithmetic") {
    CHECK(answers_equal("1/2", "0.5"));
    CHECK(answers_equal("42", "42.0"));
    CHECK_FALSE(answers_equal("5", "-5"));
    CHECK(answers_equal("\\boxed{\\frac{1}{2}}", "0.5"));
    CHECK(answers_equal("50%", "0.5"));
    CHECK(answers_equal("3,600", "3600"));
    CHECK(answers_equal("  YES ", "yes"));
    CHECK_FALSE(answers_equal("1/3", "0.333"));
    CHECK_FALSE(answers_equal("0.1", "0.10001"));
    // scaled-integer comparison, no float rounding
    CHECK(answers_equal("0.1000000000000000000000001", "1.000000000000000000000001/10"));
    CHECK_FALSE(answers_equal("0.1000000000000000000000001", "1/10"));
}

TEST_CASE("answers_equal is an equivalence relation on generated rationals") {
    std::mt19937_64 rng(23);
    struct Item {
        std::string text;
        long long num;
        long long den;
    };
    std::vector<Item> items;
    for (int i = 0; i < 120; ++i) {
        long long num = static_cast<long long>(rng() % 2001) - 1000;
        long long den = 1 + static_cast<long long>(rng() % 50);
        long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
        std::string form;
        switch (rng() % 3) {
            case 0: form = std::to_string(num) + "/" + std::to_string(den); break;
            case 1:
                form = "\\frac{" + std::to_string(num) + "}{" + std::to_string(den) + "}";
                break;
            default:
                form = std::to_string(2 * num) + "/" + std::to_string(2 * den);
                break;
        }
        items.push_back({form, num, den});
    }
    for (const auto& a : items) {
        CHECK(answers_equal(a.text, a.text));  // reflexive
        for (const auto& b : items) {
            bool truth = a.num == b.num && a.den == b.den;
            CHECK(answers_equal(a.text, b.text) == truth);
            CHECK(answers_equal(b.text, a.text) == truth);  // symmetric
        }
    }
}

TEST_CASE("grade_generation truncates before grading") {
    GradeResult r = grade_generation("i1", "The sum is 2+3=5.\nThe answer is 5.\n\nReflection:\nAlternatively 2+3 = 1+4.", "5");
    CHECK(r.verdict == Verdict::correct);
    CHECK(r.truncated.find("Reflection:") == std::string::npos);
    CHECK(r.extracted == "5");
    CHECK(r.method == GradeMethod::numeric);

    GradeResult none = grade_generation("i2", "I cannot solve this", "5");
    CHECK(none.verdict == Verdict::no_answer);
    CHECK_FALSE(none.extracted.has_value());

    GradeResult text = grade_generation("i3", "The answer is East.", "east");
    CHECK(text.verdict == Verdict::correct);
    CHECK(text.method == GradeMethod::string);
}

TEST_CASE("grade_mc short-circuits on a literal label") {
    auto transport = std::make_shared<MockTransport>(
        [](const ojson&, int) -> MockReply { return {200, "A"}; });
    Gateway gateway = make_gateway(transport);
    auto prompt = PromptTemplate::from_string("judge", "match {prediction} to {options}");
    std::vector<McOption> options{{"A", "10"}, {"B", "12"}, {"C", "14"}, {"D", "16"}};

    CHECK(grade_mc("B", options, gateway, "judge", prompt) == "B");
    CHECK(transport->calls() == 0);
    CHECK(grade_mc("c", options, gateway, "judge", prompt) == "C");
    CHECK(transport->calls() == 0);
}

TEST_CASE("grade_mc consults the judge for free-form predictions") {
    auto transport = std::make_shared<MockTransport>(
        [](const ojson&, int) -> MockReply { return {200, "C."}; });
    Gateway gateway = make_gateway(transport);
    auto prompt = PromptTemplate::from_string("judge", "{prediction}\n{options}");
    std::vector<McOption> options{{"A", "10"}, {"B", "12"}, {"C", "14"}, {"D", "16"}};

    CHECK(grade_mc("fourteen", options, gateway, "judge", prompt) == "C");
    CHECK(transport->calls() == 1);
}

TEST_CASE("grade_mc gives up after two invalid judge labels") {
    auto transport = std::make_shared<MockTransport>(
        [](const ojson&, int) -> MockReply { return {200, "E"}; });
    Gateway gateway = make_gateway(transport);
    auto prompt = PromptTemplate::from_string("judge", "{prediction}\n{options}");
    std::vector<McOption> options{{"A", "10"}, {"B", "12"}, {"C", "14"}, {"D", "16"}};

    CHECK(grade_mc("twenty", options, gateway, "judge", prompt) == std::nullopt);
    CHECK(transport->calls() == 2);
}

TEST_CASE("score aggregates verdicts") {
    auto mk = [](Verdict v) {
        GradeResult g;
        g.verdict = v;
        return g;
    };
    std::vector<GradeResult> results{mk(Verdict::correct), mk(Verdict::correct),
                                     mk(Verdict::correct), mk(Verdict::incorrect)};
    CHECK(score(results).accuracy == doctest::Approx(0.75));

    std::vector<GradeResult> empty_answers{mk(Verdict::no_answer), mk(Verdict::no_answer)};
    CHECK(score(empty_answers).accuracy == 0.0);

    CHECK_THROWS_AS(score({}), Error);

    auto summary = score(results, [](const GradeResult&) { return std::string("gsm8k"); });
    CHECK(summary.by_source.at("gsm8k") == std::pair<int, int>{3, 4});
}

TEST_SUITE_END();
