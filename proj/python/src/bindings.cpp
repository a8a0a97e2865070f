#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dapt/analysis.hpp"
#include "dapt/checkpoint.hpp"
#include "dapt/cli.hpp"
#include "dapt/corpus.hpp"
#include "dapt/eval.hpp"
#include "dapt/metrics.hpp"
#include "dapt/tokenizer.hpp"

namespace py = pybind11;
using namespace dapt;

namespace {

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["num_examples"] = r.num_examples;
  d["zero_division"] = r.zero_division;
  return d;
}

}  // namespace

PYBIND11_MODULE(_dapt, m) {
  m.doc() = "Core of the domain-adaptive pre-training toolkit";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Document>(m, "Document")
      .def(py::init<std::string, std::string, std::vector<CategoryCode>>(), py::arg("id"), py::arg("text"),
           py::arg("categories") = std::vector<CategoryCode>{})
      .def_readwrite("id", &Document::id)
      .def_readwrite("text", &Document::text)
      .def_readwrite("categories", &Document::categories)
      .def("__repr__", [](const Document& d) { return "<Document " + d.id + ">"; });

  py::class_<Tokenizer>(m, "Tokenizer")
      .def_static("train", &Tokenizer::train, py::arg("corpus"), py::arg("vocab_size"))
      .def_static("load", &Tokenizer::load, py::arg("directory"))
      .def("save", &Tokenizer::save, py::arg("directory"))
      .def("encode", &Tokenizer::encode, py::arg("text"))
      .def("decode", &Tokenizer::decode, py::arg("ids"), py::arg("allow_special") = false)
      .def_property_readonly("vocab_size", &Tokenizer::vocab_size)
      .def_property_readonly("hash", &Tokenizer::hash)
      .def("token", &Tokenizer::display, py::arg("id"))
      .def_property_readonly("merges", [](const Tokenizer& t) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& r : t.merges()) out.emplace_back(r.left, r.right);
        return out;
      });

  m.def("is_nfc_category", [](CategoryCode c) { return map_binary_label(c); }, py::arg("code"));
  m.def("load_corpus", &load_corpus, py::arg("path"));
  m.def(
      "split_corpus",
      [](const std::vector<Document>& docs, std::uint64_t seed) {
        SplitSpec spec;
        spec.seed = seed;
        auto s = split_corpus(docs, spec);
        py::dict d;
        d["pretrain"] = s.pretrain;
        d["finetune_train"] = s.finetune_train;
        d["finetune_validation"] = s.finetune_validation;
        d["test"] = s.test;
        return d;
      },
      py::arg("docs"), py::arg("seed") = 0);
  m.def("nested_subsets", &nested_subsets, py::arg("pool"), py::arg("fractions"), py::arg("seed") = 0);

  m.def(
      "classification_metrics",
      [](const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes,
         const std::string& average) {
        if (average != "weighted" && average != "binary") {
          throw ValidationError("average must be 'weighted' or 'binary'");
        }
        return report_dict(classification_metrics(
            predictions, labels, num_classes, average == "binary" ? AverageMode::kBinary : AverageMode::kWeighted));
      },
      py::arg("predictions"), py::arg("labels"), py::arg("num_classes"), py::arg("average") = "weighted");

  m.def(
      "cbtfidf_scores",
      [](const std::vector<std::string>& texts, const std::vector<int>& labels, int top_k) {
        if (texts.size() != labels.size()) throw ValidationError("texts and labels differ in length");
        ClusterAssignment a;
        std::vector<Document> docs;
        for (std::size_t i = 0; i < texts.size(); ++i) {
          a.ids.push_back(std::to_string(i));
          a.labels.push_back(labels[i]);
          a.n_clusters = std::max(a.n_clusters, labels[i]);
          docs.push_back({a.ids.back(), texts[i], {}});
        }
        auto summary = cbtfidf_topics(a, docs, top_k);
        py::dict out;
        for (const auto& c : summary.clusters) out[py::int_(c.cluster)] = c.scores;
        return out;
      },
      py::arg("texts"), py::arg("labels"), py::arg("top_k") = 3,
      "Class-based TF-IDF scores per cluster; label -1 marks an outlier.");

  m.def(
      "predict_top_k",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& tokenizer_dir,
         const std::string& text, int k) {
        auto tok = Tokenizer::load(tokenizer_dir);
        auto ck = Checkpoint::load(checkpoint);
        ck.require_tokenizer(tok.hash());
        std::vector<std::pair<std::string, double>> out;
        for (const auto& s : predict_top_k(text, k, ck.params, ck.config, tok)) out.emplace_back(s.token, s.score);
        return out;
      },
      py::arg("checkpoint"), py::arg("tokenizer"), py::arg("text"), py::arg("k") = 5);

  m.def(
      "run_cli", [](const std::vector<std::string>& args) { return run_cli(args); }, py::arg("args"),
      "Runs one dapt subcommand and returns its exit code.");
}
