#include "labloop/debugger.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "labloop/editblocks.hpp"
#include "labloop/errors.hpp"
#include "labloop/util.hpp"

namespace labloop {

TracebackDebugger::TracebackDebugger(Gateway& gateway, const PromptLibrary& prompts)
    : gateway_(gateway), prompts_(prompts) {}

std::string mechanical_outline(const std::filesystem::path& workspace,
                               const std::vector<std::string>& files) {
  static const std::regex header(R"(^(\s*)(class|def)\s+([A-Za-z_][A-Za-z0-9_]*).*$)");
  std::string out;
  for (const auto& file : files) {
    const auto path = workspace / file;
    if (!std::filesystem::exists(path)) {
      continue;
    }
    out += "==== " + file + " ====\n";
    int line_no = 0;
    for (const auto& line : split_lines(read_text_file(path))) {
      ++line_no;
      std::smatch m;
      if (std::regex_match(line, m, header)) {
        out += m[1].str() + m[2].str() + " " + m[3].str() + "  # line " +
               std::to_string(line_no) + "\n";
      }
    }
  }
  return out;
}

namespace {

std::string format_frames(const std::vector<TracebackFrame>& frames) {
  std::string out;
  for (const auto& frame : frames) {
    out += "- file " + frame.file_path + ", function " + frame.function_name + ", line " +
           std::to_string(frame.line_number);
    if (!frame.source_line.empty()) {
      out += ": " + frame.source_line;
    }
    out += "\n";
  }
  return out;
}

std::vector<std::string> involved_files(const std::vector<TracebackFrame>& frames,
                                        const std::filesystem::path& workspace) {
  std::vector<std::string> files;
  std::set<std::string> seen;
  for (const auto& frame : frames) {
    std::filesystem::path p(frame.file_path);
    std::error_code ec;
    if (p.is_absolute()) {
      p = std::filesystem::relative(p, workspace, ec);
      if (ec || p.empty() || *p.begin() == "..") {
        continue;
      }
    }
    const std::string rel = p.lexically_normal().generic_string();
    if (seen.insert(rel).second && std::filesystem::exists(workspace / rel)) {
      files.push_back(rel);
    }
  }
  return files;
}

bool structure_mentions_all(const std::string& structure,
                            const std::vector<TracebackFrame>& frames) {
  return std::all_of(frames.begin(), frames.end(), [&](const TracebackFrame& f) {
    return structure.find(f.function_name) != std::string::npos;
  });
}

}  // namespace

std::string TracebackDebugger::build_structure(const std::vector<TracebackFrame>& frames,
                                               const std::filesystem::path& workspace) {
  if (frames.empty()) {
    throw PreconditionError("build_structure: at least one frame required");
  }
  const auto files = involved_files(frames, workspace);
  const std::string frames_text = format_frames(frames);
  const std::string files_text = render_editable_files(workspace, files);

  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatRequest req;
    req.tag = "code_structure";
    req.messages = {{Role::user, prompts_.render("code_structure", {{"frames", frames_text},
                                                                    {"files", files_text}})}};
    if (attempt > 0) {
      req.messages.push_back(
          {Role::user, "Your previous rendering omitted some of the frame functions. Every "
                       "function listed in the frames must appear in the structure."});
    }
    auto resp = gateway_.chat(req);
    if (structure_mentions_all(resp.content, frames)) {
      return resp.content;
    }
  }
  std::string outline = mechanical_outline(workspace, files);
  if (outline.empty()) {
    outline = frames_text;  // nothing on disk to outline; the frames themselves must do
  }
  return outline;
}

void TracebackDebugger::debug_once(const std::filesystem::path& workspace,
                                   const CodeTemplate& tmpl, const ParsedTraceback& tb,
                                   const std::string& structure, DebugSession& session) {
  if (session.attempts_used >= session.max_attempts) {
    throw PreconditionError("debug_once: attempts exhausted for " + session.idea_id);
  }
  const std::string rendered = render_traceback(tb);
  const std::string prompt = prompts_.render(
      "debug_fix", {{"traceback", rendered},
                    {"structure", structure},
                    {"files", render_editable_files(workspace, tmpl.editable_files)}});

  std::string edit_summary = "no edits";
  int applied_total = 0;
  std::vector<std::string> last_rejections;
  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatRequest req;
    req.tag = "debug_fix";
    req.messages = {{Role::user, prompt}};
    if (attempt > 0) {
      std::string complaint = "Your previous blocks could not be applied:\n";
      for (const auto& reason : last_rejections) {
        complaint += "- " + reason + "\n";
      }
      req.messages.push_back({Role::user, complaint});
    }
    auto resp = gateway_.chat(req);
    auto blocks = parse_edit_blocks(resp.content);
    auto outcome = apply_edit_blocks(workspace, tmpl.editable_files, blocks);
    applied_total += outcome.applied;
    if (applied_total > 0 && outcome.rejected.empty()) {
      break;
    }
    last_rejections = outcome.rejected;
    if (blocks.empty()) {
      break;  // a reply with no blocks at all is not worth a re-ask
    }
    if (applied_total > 0) {
      break;
    }
  }
  if (applied_total > 0) {
    edit_summary = std::to_string(applied_total) + " edit(s) applied";
  }

  ++session.attempts_used;
  session.transcript.emplace_back(sha256_hex(rendered).substr(0, 16), edit_summary);
}

ExecutionOutcome TracebackDebugger::debug_loop(const std::filesystem::path& workspace,
                                               const CodeTemplate& tmpl, DebugSession& session,
                                               ExecutionOutcome first_failure) {
  if (first_failure.kind == OutcomeKind::success) {
    throw PreconditionError("debug_loop: initial outcome must be a failure");
  }
  ExecutionOutcome outcome = std::move(first_failure);
  while (session.attempts_used < session.max_attempts) {
    if (outcome.kind == OutcomeKind::timeout) {
      return outcome;  // not debuggable
    }
    ParsedTraceback tb;
    try {
      tb = parse_traceback(outcome.stderr_tail);
    } catch (const NoTracebackError&) {
      return outcome;  // nothing to anchor a fix on
    }
    std::vector<TracebackFrame> frames = filter_custom_frames(tb, workspace);
    if (frames.empty()) {
      frames = tb.frames;  // all library frames: fall back to the full traceback
    }
    const std::string structure = build_structure(frames, workspace);
    debug_once(workspace, tmpl, tb, structure, session);

    // Keep edited files statically clean before burning an execution.
    for (int round = 0; round < 2; ++round) {
      auto error = python_syntax_check(workspace, tmpl.editable_files);
      if (!error) {
        break;
      }
      ChatRequest req;
      req.tag = "syntax_reflection";
      req.messages = {{Role::user,
                       prompts_.render("syntax_reflection",
                                       {{"error", *error},
                                        {"files", render_editable_files(
                                                      workspace, tmpl.editable_files)}})}};
      auto resp = gateway_.chat(req);
      apply_edit_blocks(workspace, tmpl.editable_files, parse_edit_blocks(resp.content));
    }

    outcome = run_entrypoint(workspace, tmpl.entrypoint, tmpl.metric, tmpl.timeout_seconds,
                             tmpl.env_whitelist);
    if (outcome.kind == OutcomeKind::success) {
      return outcome;
    }
  }
  return outcome;
}

}  // namespace labloop
