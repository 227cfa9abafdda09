#include "labloop/experiment.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <regex>

extern char** environ;

#include "labloop/errors.hpp"
#include "labloop/util.hpp"

namespace labloop {

std::string to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::success: return "success";
    case OutcomeKind::failure: return "failure";
    case OutcomeKind::timeout: return "timeout";
  }
  return "failure";
}

CodeTemplate CodeTemplate::load(const std::filesystem::path& manifest_path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw PayloadError("template manifest " + manifest_path.string() + ": " + e.what());
  }
  CodeTemplate tmpl;
  std::filesystem::path root = doc.value("root", std::string("."));
  if (root.is_relative()) {
    root = manifest_path.parent_path() / root;
  }
  tmpl.root = root.lexically_normal();
  tmpl.entrypoint = doc.value("entrypoint", std::vector<std::string>{});
  tmpl.editable_files = doc.value("editable_files", std::vector<std::string>{});
  if (doc.contains("metric")) {
    const auto& m = doc["metric"];
    const std::string kind = m.value("kind", std::string("stdout_regex"));
    if (kind == "stdout_regex") {
      tmpl.metric.kind = MetricSpec::Kind::stdout_regex;
      tmpl.metric.pattern_or_path = m.value("pattern", std::string());
    } else if (kind == "metrics_file") {
      tmpl.metric.kind = MetricSpec::Kind::metrics_file;
      tmpl.metric.pattern_or_path = m.value("path", std::string());
    } else {
      throw PayloadError("metric kind must be stdout_regex|metrics_file: " + kind);
    }
    tmpl.metric.name = m.value("name", std::string("metric"));
  }
  tmpl.baseline_metric = doc.value("baseline", 0.0);
  tmpl.timeout_seconds = doc.value("timeout_s", 3600);
  tmpl.higher_is_better = doc.value("higher_is_better", true);
  tmpl.env_whitelist = doc.value("env_whitelist", std::vector<std::string>{});
  tmpl.validate();
  return tmpl;
}

void CodeTemplate::validate() const {
  if (entrypoint.empty()) {
    throw PreconditionError("code template: entrypoint must be non-empty");
  }
  if (!std::isfinite(baseline_metric)) {
    throw PreconditionError("code template: baseline metric must be finite");
  }
  if (timeout_seconds < 1) {
    throw PreconditionError("code template: timeout must be positive");
  }
  if (!std::filesystem::is_directory(root)) {
    throw PreconditionError("code template root not found: " + root.string());
  }
  for (const auto& file : editable_files) {
    if (!std::filesystem::exists(root / file)) {
      throw PreconditionError("editable file missing from template: " + file);
    }
  }
}

// ---------------------------------------------------------------------------
// Subprocess execution

namespace {

struct Pipe {
  int read_fd = -1;
  int write_fd = -1;

  Pipe() {
    int fds[2];
    if (pipe(fds) != 0) {
      throw Error("pipe() failed: " + std::string(std::strerror(errno)));
    }
    read_fd = fds[0];
    write_fd = fds[1];
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (read_fd >= 0) {
      ::close(read_fd);
      read_fd = -1;
    }
  }
  void close_write() {
    if (write_fd >= 0) {
      ::close(write_fd);
      write_fd = -1;
    }
  }
};

std::optional<double> parse_metric_value(const std::string& text) {
  try {
    std::size_t used = 0;
    double value = std::stod(text, &used);
    if (std::isfinite(value)) {
      return value;
    }
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

}  // namespace

ExecutionOutcome run_entrypoint(const std::filesystem::path& workspace,
                                const std::vector<std::string>& entrypoint,
                                const MetricSpec& spec, int timeout_seconds,
                                const std::vector<std::string>& env_whitelist) {
  if (!std::filesystem::is_directory(workspace)) {
    throw PreconditionError("workspace not found: " + workspace.string());
  }
  if (entrypoint.empty()) {
    throw PreconditionError("entrypoint must be non-empty");
  }

  Pipe out_pipe;
  Pipe err_pipe;
  const auto started = std::chrono::steady_clock::now();

  pid_t pid = fork();
  if (pid < 0) {
    throw Error("fork() failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    // Child: own process group so a timeout can kill the whole tree.
    setpgid(0, 0);
    if (chdir(workspace.c_str()) != 0) {
      _exit(127);
    }
    dup2(out_pipe.write_fd, STDOUT_FILENO);
    dup2(err_pipe.write_fd, STDERR_FILENO);
    out_pipe.close_read();
    out_pipe.close_write();
    err_pipe.close_read();
    err_pipe.close_write();

    std::vector<char*> argv;
    for (const auto& arg : entrypoint) {
      argv.push_back(const_cast<char*>(arg.c_str()));
    }
    argv.push_back(nullptr);

    if (env_whitelist.empty()) {
      execvp(argv[0], argv.data());
    } else {
      std::vector<std::string> env_storage;
      for (const auto& name : env_whitelist) {
        if (const char* value = std::getenv(name.c_str())) {
          env_storage.push_back(name + "=" + value);
        }
      }
      std::vector<char*> envp;
      for (auto& e : env_storage) {
        envp.push_back(e.data());
      }
      envp.push_back(nullptr);
      execvpe(argv[0], argv.data(), envp.data());
    }
    _exit(127);
  }

  out_pipe.close_write();
  err_pipe.close_write();
  fcntl(out_pipe.read_fd, F_SETFL, O_NONBLOCK);
  fcntl(err_pipe.read_fd, F_SETFL, O_NONBLOCK);

  std::string stdout_text;
  std::string stderr_text;
  bool timed_out = false;
  const auto deadline = started + std::chrono::seconds(timeout_seconds);

  auto drain = [](int fd, std::string& into) {
    char buf[4096];
    for (;;) {
      ssize_t n = read(fd, buf, sizeof(buf));
      if (n > 0) {
        into.append(buf, static_cast<std::size_t>(n));
      } else {
        return n == 0;  // true = EOF
      }
    }
  };

  bool out_eof = false;
  bool err_eof = false;
  int status = 0;
  bool exited = false;
  while (!(out_eof && err_eof) || !exited) {
    if (std::chrono::steady_clock::now() >= deadline) {
      timed_out = true;
      kill(-pid, SIGKILL);
      kill(pid, SIGKILL);  // in case setpgid lost the race
      waitpid(pid, &status, 0);
      exited = true;
      break;
    }
    if (!exited) {
      pid_t done = waitpid(pid, &status, WNOHANG);
      if (done == pid) {
        exited = true;
      }
    }
    struct pollfd fds[2] = {{out_pipe.read_fd, POLLIN, 0}, {err_pipe.read_fd, POLLIN, 0}};
    poll(fds, 2, 50);
    if (!out_eof && (fds[0].revents & (POLLIN | POLLHUP))) {
      out_eof = drain(out_pipe.read_fd, stdout_text);
    }
    if (!err_eof && (fds[1].revents & (POLLIN | POLLHUP))) {
      err_eof = drain(err_pipe.read_fd, stderr_text);
    }
    if (exited && out_eof && err_eof) {
      break;
    }
  }
  drain(out_pipe.read_fd, stdout_text);
  drain(err_pipe.read_fd, stderr_text);

  ExecutionOutcome outcome;
  outcome.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (timed_out) {
    outcome.kind = OutcomeKind::timeout;
    return outcome;
  }

  const int exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  outcome.exit_code = exit_code;
  if (exit_code != 0) {
    outcome.kind = OutcomeKind::failure;
    outcome.stderr_tail = tail_bytes(stderr_text, 64 * 1024);
    if (outcome.stderr_tail.empty()) {
      outcome.stderr_tail = "(process exited with code " + std::to_string(exit_code) +
                            " and produced no stderr)";
    }
    return outcome;
  }

  // Exit 0: extract the metric.
  std::optional<double> metric;
  std::string extraction_error;
  if (spec.kind == MetricSpec::Kind::stdout_regex) {
    try {
      std::regex re(spec.pattern_or_path);
      std::smatch m;
      if (std::regex_search(stdout_text, m, re) && m.size() >= 2) {
        metric = parse_metric_value(m[1].str());
        if (!metric) {
          extraction_error = "metric group \"" + m[1].str() + "\" is not a finite number";
        }
      } else {
        extraction_error =
            "metric pattern \"" + spec.pattern_or_path + "\" not found in stdout";
      }
    } catch (const std::regex_error& e) {
      extraction_error = std::string("bad metric regex: ") + e.what();
    }
  } else {
    const std::filesystem::path metrics_path = workspace / spec.pattern_or_path;
    if (!std::filesystem::exists(metrics_path)) {
      extraction_error = "metrics file not written: " + spec.pattern_or_path;
    } else {
      auto doc = nlohmann::json::parse(read_text_file(metrics_path), nullptr, false);
      if (!doc.is_object() || !doc.contains(spec.name) || !doc[spec.name].is_number()) {
        extraction_error = "metrics file lacks numeric \"" + spec.name + "\"";
      } else {
        double value = doc[spec.name].get<double>();
        if (std::isfinite(value)) {
          metric = value;
        } else {
          extraction_error = "metric \"" + spec.name + "\" is not finite";
        }
      }
    }
  }

  if (!metric) {
    outcome.kind = OutcomeKind::failure;
    outcome.stderr_tail = "metric extraction failed: " + extraction_error +
                          (stderr_text.empty() ? "" : "\n" + tail_bytes(stderr_text, 8 * 1024));
    return outcome;
  }
  outcome.kind = OutcomeKind::success;
  outcome.metric = metric;
  return outcome;
}

std::optional<std::string> python_syntax_check(const std::filesystem::path& workspace,
                                               const std::vector<std::string>& editable_files) {
  std::vector<std::string> py_files;
  for (const auto& file : editable_files) {
    if (std::filesystem::path(file).extension() == ".py" &&
        std::filesystem::exists(workspace / file)) {
      py_files.push_back(file);
    }
  }
  if (py_files.empty()) {
    return std::nullopt;
  }
  std::vector<std::string> argv = {"python3", "-m", "py_compile"};
  argv.insert(argv.end(), py_files.begin(), py_files.end());
  MetricSpec no_metric;
  no_metric.kind = MetricSpec::Kind::stdout_regex;
  no_metric.pattern_or_path = "(x^)never";  // exit 0 is all we need
  ExecutionOutcome result = run_entrypoint(workspace, argv, no_metric, 60);
  if (result.kind == OutcomeKind::failure && result.exit_code && *result.exit_code != 0) {
    return result.stderr_tail;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// ExperimentRunner

ExperimentRunner::ExperimentRunner(Gateway& gateway, const PromptLibrary& prompts)
    : gateway_(gateway), prompts_(prompts) {}

namespace {

std::vector<std::string> parse_plan_steps(const std::string& reply) {
  std::vector<std::string> steps;
  nlohmann::json doc = extract_json_block(reply);
  if (doc.is_array()) {
    for (const auto& item : doc) {
      if (item.is_string() && !trim(item.get<std::string>()).empty()) {
        steps.push_back(trim(item.get<std::string>()));
      }
    }
    if (!steps.empty()) {
      return steps;
    }
  }
  static const std::regex bullet(R"(^\s*(?:\d+[.)]|[-*])\s+(.*\S)\s*$)");
  for (const auto& line : split_lines(reply)) {
    std::smatch m;
    if (std::regex_match(line, m, bullet)) {
      steps.push_back(m[1].str());
    }
  }
  if (steps.empty()) {
    // Last resort: every non-empty line is a step.
    for (const auto& line : split_lines(reply)) {
      if (!trim(line).empty()) {
        steps.push_back(trim(line));
      }
    }
  }
  return steps;
}

}  // namespace

ExperimentPlan ExperimentRunner::generate_plan(const Idea& idea, const CodeTemplate& tmpl) {
  if (idea.status != IdeaStatus::pending_experiment) {
    throw PreconditionError("generate_plan: idea " + idea.id + " is not pending_experiment");
  }
  std::string editable;
  for (const auto& file : tmpl.editable_files) {
    editable += "- " + file + "\n";
  }
  const std::string prompt =
      prompts_.render("plan_generation", {{"title", idea.title},
                                          {"summary", idea.summary},
                                          {"experiment_plan", idea.experiment_plan},
                                          {"editable_files", editable}});
  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatRequest req;
    req.tag = "plan_generation";
    req.messages = {{Role::user, prompt}};
    if (attempt > 0) {
      req.messages.push_back({Role::user,
                              "Your previous reply contained no plan steps. Reply with a "
                              "numbered list of steps, one per line."});
    }
    auto resp = gateway_.chat(req);
    auto steps = parse_plan_steps(resp.content);
    if (!steps.empty()) {
      return ExperimentPlan{idea.id, std::move(steps)};
    }
  }
  throw ModelReplyError("plan generation for idea " + idea.id + " produced no steps");
}

std::filesystem::path ExperimentRunner::materialize_workspace(
    const CodeTemplate& tmpl, const std::string& idea_id,
    const std::filesystem::path& work_root) {
  if (!std::filesystem::is_directory(tmpl.root)) {
    throw PreconditionError("template root not found: " + tmpl.root.string());
  }
  std::filesystem::create_directories(work_root);
  std::filesystem::path workspace = work_root / idea_id;
  for (int suffix = 2; std::filesystem::exists(workspace); ++suffix) {
    workspace = work_root / (idea_id + "-" + std::to_string(suffix));
  }
  std::filesystem::copy(tmpl.root, workspace, std::filesystem::copy_options::recursive);
  return workspace;
}

std::string render_editable_files(const std::filesystem::path& workspace,
                                  const std::vector<std::string>& editable_files) {
  std::string out;
  for (const auto& file : editable_files) {
    out += "==== " + file + " ====\n";
    const auto path = workspace / file;
    out += std::filesystem::exists(path) ? read_text_file(path) : "(missing)\n";
    if (!out.empty() && out.back() != '\n') {
      out += "\n";
    }
  }
  return out;
}

void ExperimentRunner::apply_edits(const std::filesystem::path& workspace,
                                   const CodeTemplate& tmpl, const ExperimentPlan& plan,
                                   const Idea& idea) {
  std::string plan_text;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    plan_text += std::to_string(i + 1) + ". " + plan.steps[i] + "\n";
  }

  int total_applied = 0;
  std::vector<std::string> last_rejections;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const std::string prompt = prompts_.render(
        "code_edit", {{"title", idea.title},
                      {"summary", idea.summary},
                      {"plan", plan_text},
                      {"files", render_editable_files(workspace, tmpl.editable_files)}});
    ChatRequest req;
    req.tag = "code_edit";
    req.messages = {{Role::user, prompt}};
    if (attempt > 0) {
      std::string complaint = "Your previous blocks could not be applied:\n";
      for (const auto& reason : last_rejections) {
        complaint += "- " + reason + "\n";
      }
      complaint += "Reply again with corrected search/replace blocks.";
      req.messages.push_back({Role::user, complaint});
    }
    auto resp = gateway_.chat(req);
    auto blocks = parse_edit_blocks(resp.content);
    auto outcome = apply_edit_blocks(workspace, tmpl.editable_files, blocks);
    total_applied += outcome.applied;
    if (outcome.applied > 0 && outcome.rejected.empty()) {
      break;
    }
    last_rejections = outcome.rejected;
    if (last_rejections.empty()) {
      last_rejections.push_back("reply contained no search/replace blocks");
    }
    if (total_applied > 0) {
      break;  // partial application is workable; the debug loop can refine
    }
  }
  if (total_applied == 0) {
    throw EditError("no applicable edit blocks for idea " + idea.id + " after re-ask");
  }

  // Self-reflection: clear static syntax errors before the first execution.
  for (int round = 0; round < 2; ++round) {
    auto error = python_syntax_check(workspace, tmpl.editable_files);
    if (!error) {
      break;
    }
    const std::string prompt = prompts_.render(
        "syntax_reflection",
        {{"error", *error},
         {"files", render_editable_files(workspace, tmpl.editable_files)}});
    ChatRequest req;
    req.tag = "syntax_reflection";
    req.messages = {{Role::user, prompt}};
    auto resp = gateway_.chat(req);
    apply_edit_blocks(workspace, tmpl.editable_files, parse_edit_blocks(resp.content));
  }
}

ExecutionOutcome ExperimentRunner::execute(const std::filesystem::path& workspace,
                                           const CodeTemplate& tmpl) {
  return run_entrypoint(workspace, tmpl.entrypoint, tmpl.metric, tmpl.timeout_seconds,
                        tmpl.env_whitelist);
}

}  // namespace labloop
