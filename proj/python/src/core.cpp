// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings. JSON-valued results cross the boundary as strings and are
// decoded by the package wrapper.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cli.hpp"
#include "rmlab/checkpoint.hpp"
#include "rmlab/corpus_stats.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/eval.hpp"
#include "rmlab/synthetic.hpp"

namespace py = pybind11;
using namespace rmlab;

namespace {

MarkerTask task_by_name(const std::string& name) {
    if (name == "general_a") {
        return general_task_a();
    }
    if (name == "general_b") {
        return general_task_b();
    }
    if (name == "customized") {
        return customized_task();
    }
    throw ConfigError("unknown synthetic task '" + name + "' (general_a, general_b, customized)");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "rmlab native core";
    m.attr("__version__") = RMLAB_VERSION;

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    auto data_error = py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", data_error.ptr());
    py::register_exception<LoadError>(m, "LoadError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<IndexError>(m, "IndexError", base.ptr());

    py::class_<PreferencePair>(m, "PreferencePair")
        .def(py::init([](std::string prompt, std::string chosen, std::string rejected,
                         std::string source, std::optional<std::string> domain) {
                 return PreferencePair{std::move(prompt), std::move(chosen), std::move(rejected),
                                       std::move(source), std::move(domain)};
             }),
             py::arg("prompt"), py::arg("chosen"), py::arg("rejected"), py::arg("source") = "",
             py::arg("domain") = std::nullopt)
        .def_readwrite("prompt", &PreferencePair::prompt)
        .def_readwrite("chosen", &PreferencePair::chosen)
        .def_readwrite("rejected", &PreferencePair::rejected)
        .def_readwrite("source", &PreferencePair::source)
        .def_readwrite("domain", &PreferencePair::domain)
        .def("__eq__", [](const PreferencePair& a, const PreferencePair& b) { return a == b; })
        .def("to_json", [](const PreferencePair& p) { return to_jsonl_line(p); })
        .def("__repr__", [](const PreferencePair& p) { return "PreferencePair(" + to_jsonl_line(p) + ")"; });

    py::class_<DomainRecord>(m, "DomainRecord")
        .def(py::init([](std::string query, std::map<std::string, std::string> responses) {
                 return DomainRecord{std::move(query), std::move(responses)};
             }),
             py::arg("query"), py::arg("responses") = std::map<std::string, std::string>{})
        .def_readwrite("query", &DomainRecord::query)
        .def_readwrite("responses", &DomainRecord::responses)
        .def("__eq__", [](const DomainRecord& a, const DomainRecord& b) { return a == b; })
        .def("__repr__", [](const DomainRecord& r) { return "DomainRecord(" + to_jsonl_line(r) + ")"; });

    m.def("encode",
          [](const std::string& text, bool bos, bool eos) { return ByteTokenizer().encode(text, bos, eos); },
          py::arg("text"), py::arg("add_bos") = false, py::arg("add_eos") = false);
    m.def("decode", [](const std::vector<TokenId>& ids) { return ByteTokenizer().decode(ids); });

    m.def("geometric_mean", &geometric_mean, py::arg("acc_a"), py::arg("acc_b"));
    m.def("average_accuracy",
          [](const std::vector<double>& v) { return average_accuracy(v); });
    m.def("accuracy_from_scores", [](const std::vector<double>& good, const std::vector<double>& bad) {
        const auto r = accuracy_from_scores(good, bad);
        return py::make_tuple(r.accuracy, r.correct, r.ties, r.total);
    });

    m.def("response_stats_json", [](const std::string& text) { return response_stats(text).to_json().dump(); });
    m.def("tfidf_matrix", [](const std::map<std::string, std::string>& docs) {
        auto t = tfidf_matrix(docs);
        return py::make_tuple(t.idf, t.score);
    });
    m.def("corpus_report_json",
          [](const std::vector<DomainRecord>& records, std::size_t stopwords, std::size_t top_k) {
              return corpus_report(records, stopwords, top_k).dump();
          },
          py::arg("records"), py::arg("stopwords") = 100, py::arg("top_k") = 100);

    m.def("build_dsp_pairs",
          [](const std::vector<DomainRecord>& records, const std::string& target, const std::string& source) {
              return build_dsp_pairs(records, target, source).pairs;
          },
          py::arg("records"), py::arg("target"), py::arg("source") = "dsp");
    m.def("dedup_invalid", &dedup_invalid);
    m.def("split",
          [](const std::vector<PreferencePair>& pairs, double train_ratio, std::uint64_t seed) {
              return split(pairs, SplitRatio{train_ratio, 1.0 - train_ratio}, seed);
          },
          py::arg("pairs"), py::arg("train_ratio") = 0.95, py::arg("seed") = 1);
    m.def("read_pairs", &read_pairs);
    m.def("write_pairs", &write_pairs);
    m.def("read_records", &read_records);
    m.def("write_records", &write_records);
    m.def("marker_pairs",
          [](const std::string& task, std::size_t n, std::uint64_t seed) {
              return marker_pairs(task_by_name(task), n, seed);
          },
          py::arg("task"), py::arg("n"), py::arg("seed"));

    m.def("checkpoint_info_json", [](const std::filesystem::path& path) {
        const Checkpoint c = Checkpoint::load(path);
        nlohmann::ordered_json j;
        j["content_hash"] = c.content_hash();
        j["has_reward_head"] = c.has_reward_head();
        j["tensors"] = c.tensors.size();
        j["meta"] = c.meta;
        return j.dump();
    });
    m.def("evaluate_json",
          [](const std::filesystem::path& checkpoint, const std::map<std::string, std::vector<PreferencePair>>& sets,
             std::size_t max_len) {
              const Checkpoint c = Checkpoint::load(checkpoint);
              if (!c.has_reward_head()) {
                  throw LoadError(checkpoint.string() + " has no reward head");
              }
              const RewardModel model = RewardModel::from_checkpoint(c);
              CollateOptions opts;
              opts.max_len = max_len;
              py::gil_scoped_release release;
              return evaluate(model, sets, opts, c.content_hash()).to_json().dump();
          },
          py::arg("checkpoint"), py::arg("sets"), py::arg("max_len") = 128);

    m.def("run_cli",
          [](std::vector<std::string> args) {
              args.insert(args.begin(), "rmlab");
              py::gil_scoped_release release;
              return cli::dispatch(args);
          },
          "Runs one rmlab subcommand in-process and returns its exit code.");
}
