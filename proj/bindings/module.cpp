#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "labloop/errors.hpp"
#include "labloop/feedback.hpp"
#include "labloop/gateway.hpp"
#include "labloop/ideas.hpp"
#include "labloop/retrieval.hpp"
#include "labloop/traceback.hpp"

namespace py = pybind11;

namespace {

// Independence sweep over bare vectors: mirrors the idea-level check without
// dragging Idea/bank bookkeeping across the language boundary.
std::vector<bool> independence_filter(const std::vector<std::vector<double>>& embeddings,
                                      double tau,
                                      const std::vector<std::vector<double>>& bank) {
  std::vector<labloop::EmbeddingVector> store;
  for (const auto& values : bank) {
    store.push_back({values});
  }
  std::vector<bool> accepted;
  for (const auto& values : embeddings) {
    labloop::EmbeddingVector vec{values};
    bool keep = true;
    if (!store.empty()) {
      double max_sim = -1.0;
      for (const auto& entry : store) {
        max_sim = std::max(max_sim, labloop::cosine_similarity(vec, entry));
      }
      keep = max_sim < tau;
    }
    store.push_back(vec);  // every checked embedding joins the comparison set
    accepted.push_back(keep);
  }
  return accepted;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "labloop core operations";

  py::register_exception<labloop::Error>(m, "LabloopError");

  py::class_<labloop::TracebackFrame>(m, "TracebackFrame")
      .def(py::init<>())
      .def_readwrite("file_path", &labloop::TracebackFrame::file_path)
      .def_readwrite("function_name", &labloop::TracebackFrame::function_name)
      .def_readwrite("line_number", &labloop::TracebackFrame::line_number)
      .def_readwrite("source_line", &labloop::TracebackFrame::source_line)
      .def_readwrite("is_custom", &labloop::TracebackFrame::is_custom)
      .def("__repr__", [](const labloop::TracebackFrame& f) {
        return "<TracebackFrame " + f.file_path + ":" + std::to_string(f.line_number) +
               " in " + f.function_name + ">";
      });

  py::class_<labloop::ParsedTraceback, std::shared_ptr<labloop::ParsedTraceback>>(
      m, "ParsedTraceback")
      .def_readonly("frames", &labloop::ParsedTraceback::frames)
      .def_readonly("exception_type", &labloop::ParsedTraceback::exception_type)
      .def_readonly("exception_message", &labloop::ParsedTraceback::exception_message)
      .def_readonly("chained", &labloop::ParsedTraceback::chained);

  m.def("parse_traceback", &labloop::parse_traceback, py::arg("stderr_text"),
        "Parse interpreter traceback text into structured frames.");
  m.def("render_traceback", &labloop::render_traceback, py::arg("traceback"),
        "Render a parsed traceback back to standard text.");
  m.def("filter_custom_frames", &labloop::filter_custom_frames, py::arg("traceback"),
        py::arg("workspace_root"),
        "Frames under the workspace root, library and install-tree frames dropped.");

  m.def(
      "cosine_similarity",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return labloop::cosine_similarity({a}, {b});
      },
      py::arg("a"), py::arg("b"));
  m.def("independence_filter", &independence_filter, py::arg("embeddings"),
        py::arg("tau") = 0.8, py::arg("bank") = std::vector<std::vector<double>>{},
        "Accept flags for each embedding; earlier batch members join the "
        "comparison set as the sweep advances.");

  py::class_<labloop::PaperRecord>(m, "PaperRecord")
      .def(py::init<>())
      .def_readwrite("external_id", &labloop::PaperRecord::external_id)
      .def_readwrite("title", &labloop::PaperRecord::title)
      .def_readwrite("abstract", &labloop::PaperRecord::abstract)
      .def_readwrite("year", &labloop::PaperRecord::year)
      .def_readwrite("score", &labloop::PaperRecord::score);

  m.def("filter_by_score", &labloop::filter_by_score, py::arg("papers"),
        py::arg("min_score") = 8);
  m.def("keyword_frequency", &labloop::keyword_frequency, py::arg("papers"),
        py::arg("keywords"));

  m.def(
      "categorize",
      [](double baseline, double achieved, double epsilon, bool higher_is_better) {
        return labloop::to_string(
            labloop::categorize(baseline, achieved, epsilon, higher_is_better));
      },
      py::arg("baseline"), py::arg("achieved"), py::arg("epsilon") = 0.0,
      py::arg("higher_is_better") = true,
      "One of 'improvement', 'maintenance', 'decline'.");
}
