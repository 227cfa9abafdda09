#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "labloop/editblocks.hpp"
#include "labloop/gateway.hpp"
#include "labloop/ideas.hpp"
#include "labloop/prompts.hpp"

namespace labloop {

struct MetricSpec {
  enum class Kind { stdout_regex, metrics_file };
  Kind kind = Kind::stdout_regex;
  // stdout_regex: regex whose first capture group is the metric value.
  // metrics_file: workspace-relative path of a JSON file {<name>: number}.
  std::string pattern_or_path;
  std::string name;
};

// Reference code base an idea's edits are applied to.
struct CodeTemplate {
  std::filesystem::path root;
  std::vector<std::string> entrypoint;  // argv, run with cwd = workspace
  std::vector<std::string> editable_files;
  MetricSpec metric;
  double baseline_metric = 0.0;
  int timeout_seconds = 3600;
  bool higher_is_better = true;
  std::vector<std::string> env_whitelist;  // empty = inherit everything

  // Manifest JSON: {entrypoint:[...], editable_files:[...],
  // metric:{kind,pattern|path,name}, baseline, timeout_s, ...}. Relative
  // `root` resolves against the manifest's directory.
  static CodeTemplate load(const std::filesystem::path& manifest_path);
  void validate() const;
};

struct ExperimentPlan {
  std::string idea_id;
  std::vector<std::string> steps;
};

enum class OutcomeKind { success, failure, timeout };

std::string to_string(OutcomeKind kind);

struct ExecutionOutcome {
  OutcomeKind kind = OutcomeKind::failure;
  std::optional<double> metric;   // present iff success
  std::string stderr_tail;        // retained for the debugger iff failure
  std::optional<int> exit_code;   // absent on timeout
  double wall_time_seconds = 0.0;
};

// Runs `entrypoint` in `workspace` with captured output and a wall-clock
// limit, then extracts the metric per `spec` on exit 0. A clean exit whose
// metric cannot be extracted is a failure (a bug to debug), not a success.
ExecutionOutcome run_entrypoint(const std::filesystem::path& workspace,
                                const std::vector<std::string>& entrypoint,
                                const MetricSpec& spec, int timeout_seconds,
                                const std::vector<std::string>& env_whitelist = {});

// `python -m py_compile` over the workspace's editable *.py files. Returns
// the checker output on failure, nullopt when everything compiles.
std::optional<std::string> python_syntax_check(const std::filesystem::path& workspace,
                                               const std::vector<std::string>& editable_files);

class ExperimentRunner {
 public:
  ExperimentRunner(Gateway& gateway, const PromptLibrary& prompts);

  ExperimentPlan generate_plan(const Idea& idea, const CodeTemplate& tmpl);

  // Fresh per-idea copy of the template tree under `work_root`; the template
  // itself is never mutated. A second materialization of the same idea gets
  // a suffixed directory instead of clobbering the first.
  std::filesystem::path materialize_workspace(const CodeTemplate& tmpl,
                                              const std::string& idea_id,
                                              const std::filesystem::path& work_root);

  // Asks for search/replace edits, applies them (one re-ask when blocks are
  // rejected), then runs the syntax self-reflection pass: any static syntax
  // failure is shown back to the model, up to 2 rounds, before first
  // execution. Throws EditError when no edit applies at all.
  void apply_edits(const std::filesystem::path& workspace, const CodeTemplate& tmpl,
                   const ExperimentPlan& plan, const Idea& idea);

  ExecutionOutcome execute(const std::filesystem::path& workspace, const CodeTemplate& tmpl);

 private:
  Gateway& gateway_;
  const PromptLibrary& prompts_;
};

// Editable files rendered as "==== path ====\n<content>" sections for prompts.
std::string render_editable_files(const std::filesystem::path& workspace,
                                  const std::vector<std::string>& editable_files);

}  // namespace labloop
