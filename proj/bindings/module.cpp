#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "refaug/analysis.hpp"
#include "refaug/grading.hpp"
#include "refaug/ngram.hpp"
#include "refaug/records.hpp"
#include "refaug/sequence.hpp"

namespace py = pybind11;
using namespace refaug;

namespace {

std::vector<Doc> to_docs(const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::vector<Doc> docs;
    docs.reserve(pairs.size());
    for (const auto& [id, text] : pairs) docs.push_back({id, text});
    return docs;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Core operations of the refaug toolkit";
    m.attr("__version__") = "0.1.0";

    py::register_exception<Error>(m, "RefaugError");

    py::enum_<Source>(m, "Source")
        .value("gsm8k", Source::gsm8k)
        .value("math", Source::math)
        .value("metamath", Source::metamath)
        .value("synthetic", Source::synthetic);
    py::enum_<Split>(m, "Split").value("train", Split::train).value("test", Split::test);
    py::enum_<FollowUpKind>(m, "FollowUpKind")
        .value("abstraction", FollowUpKind::abstraction)
        .value("analogy", FollowUpKind::analogy);
    py::enum_<Lineage>(m, "Lineage")
        .value("standard", Lineage::standard)
        .value("refaug_tail", Lineage::refaug_tail)
        .value("refaug_front", Lineage::refaug_front)
        .value("qaug", Lineage::qaug)
        .value("aaug", Lineage::aaug)
        .value("metamath", Lineage::metamath);
    py::enum_<Placement>(m, "Placement")
        .value("tail", Placement::tail)
        .value("front", Placement::front);

    py::class_<MathInstance>(m, "MathInstance")
        .def(py::init([](std::string id, std::string question, std::string solution,
                         std::string final_answer, Source source, Split split) {
                 MathInstance inst;
                 inst.id = std::move(id);
                 inst.question = std::move(question);
                 inst.solution = std::move(solution);
                 inst.final_answer = std::move(final_answer);
                 inst.source = source;
                 inst.split = split;
                 return inst;
             }),
             py::arg("id"), py::arg("question"), py::arg("solution"),
             py::arg("final_answer") = "", py::arg("source") = Source::gsm8k,
             py::arg("split") = Split::train)
        .def_readwrite("id", &MathInstance::id)
        .def_readwrite("question", &MathInstance::question)
        .def_readwrite("solution", &MathInstance::solution)
        .def_readwrite("final_answer", &MathInstance::final_answer)
        .def_readwrite("source", &MathInstance::source)
        .def_readwrite("split", &MathInstance::split)
        .def("seed_id", &MathInstance::seed_id);

    py::class_<ReflectiveSection>(m, "ReflectiveSection")
        .def(py::init([](std::string seed_id, std::string alternative, std::string follow_up,
                         FollowUpKind kind) {
                 ReflectiveSection s;
                 s.id = seed_id + "::reflection";
                 s.seed_id = std::move(seed_id);
                 s.alternative = std::move(alternative);
                 s.follow_up = std::move(follow_up);
                 s.follow_up_kind = kind;
                 return s;
             }),
             py::arg("seed_id"), py::arg("alternative"), py::arg("follow_up"),
             py::arg("kind") = FollowUpKind::abstraction)
        .def_readwrite("id", &ReflectiveSection::id)
        .def_readwrite("seed_id", &ReflectiveSection::seed_id)
        .def_readwrite("alternative", &ReflectiveSection::alternative)
        .def_readwrite("follow_up", &ReflectiveSection::follow_up)
        .def_readwrite("follow_up_kind", &ReflectiveSection::follow_up_kind);

    py::class_<TrainingSequence>(m, "TrainingSequence")
        .def_readonly("id", &TrainingSequence::id)
        .def_readonly("input", &TrainingSequence::input)
        .def_readonly("output", &TrainingSequence::output)
        .def_readonly("loss_boundary", &TrainingSequence::loss_boundary)
        .def_readonly("lineage", &TrainingSequence::lineage)
        .def_readonly("token_estimate", &TrainingSequence::token_estimate);

    // grading
    m.def("truncate_at_stop", &truncate_at_stop, py::arg("text"),
          py::arg("stop") = "Reflection:");
    m.def("extract_prediction",
          [](const std::string& text) { return extract_prediction(text); }, py::arg("text"));
    m.def("normalize_answer",
          [](const std::string& s) { return normalize_answer(s); }, py::arg("answer"));
    m.def("answers_equal",
          [](const std::string& a, const std::string& b) { return answers_equal(a, b); },
          py::arg("a"), py::arg("b"));
    m.def("extract_gold_answer",
          [](const std::string& solution, const std::string& source) {
              return extract_gold_answer(solution, source_from_string(source));
          },
          py::arg("solution"), py::arg("source"));

    // n-gram overlap
    m.def("ngram_tokenize",
          [](const std::string& text) { return ngram_tokenize(text); }, py::arg("text"));
    m.def("ngram_set",
          [](const std::string& text, int n) { return ngram_set(text, n); }, py::arg("text"),
          py::arg("n"));
    m.def("overlap",
          [](const std::vector<std::pair<std::string, std::string>>& sources,
             const std::vector<std::pair<std::string, std::string>>& targets, int n) {
              OverlapReport report = overlap(to_docs(sources), to_docs(targets), n);
              py::list hits;
              for (const auto& h : report.hits) {
                  py::dict d;
                  d["target_id"] = h.target_id;
                  d["source_ids"] = h.source_ids;
                  d["shared_ngram"] = h.shared_ngram;
                  hits.append(d);
              }
              py::dict out;
              out["n"] = report.n;
              out["hit_count"] = report.hit_count;
              out["hits"] = hits;
              return out;
          },
          py::arg("sources"), py::arg("targets"), py::arg("n"),
          "Hashed n-gram overlap between (id, text) source and target lists.");

    // sequence rendering
    m.def("render_standard",
          [](const MathInstance& instance, Lineage lineage, const std::string& system_prompt) {
              return render_standard(instance, lineage, system_prompt);
          },
          py::arg("instance"), py::arg("lineage") = Lineage::standard,
          py::arg("system_prompt") = "");
    m.def("render_refaug",
          [](const MathInstance& instance, const ReflectiveSection& reflection,
             Placement placement, const std::string& system_prompt) {
              return render_refaug(instance, reflection, placement, system_prompt);
          },
          py::arg("instance"), py::arg("reflection"), py::arg("placement") = Placement::tail,
          py::arg("system_prompt") = "");
    m.def("mix",
          [](const std::vector<MathInstance>& instances,
             const std::map<std::string, ReflectiveSection>& reflections, double p,
             std::uint64_t seed) {
              auto [sequences, plan] = mix(instances, reflections, p, seed);
              py::dict plan_dict;
              plan_dict["proportion"] = plan.proportion;
              plan_dict["rng_seed"] = plan.rng_seed;
              plan_dict["reflected"] = plan.reflected;
              plan_dict["standard"] = plan.standard;
              return py::make_tuple(sequences, plan_dict);
          },
          py::arg("instances"), py::arg("reflections"), py::arg("p"), py::arg("seed"));

    // analysis
    m.def("error_breakdown_from_marginals",
          [](int reasoning, int calculation, int total_wrong) {
              ErrorBreakdown b = ErrorBreakdown::from_marginals(reasoning, calculation, total_wrong);
              py::dict d;
              d["reasoning"] = b.reasoning;
              d["calculation"] = b.calculation;
              d["both"] = b.both;
              d["total_wrong"] = b.total_wrong;
              return d;
          },
          py::arg("reasoning"), py::arg("calculation"), py::arg("total_wrong"));
    m.def("count_ws_tokens",
          [](const std::string& s) { return count_ws_tokens(s); }, py::arg("text"));
}
