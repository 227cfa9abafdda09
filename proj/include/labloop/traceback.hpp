#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace labloop {

struct TracebackFrame {
  std::string file_path;
  std::string function_name;  // "<module>" for syntax-error pseudo-frames
  int line_number = 0;
  std::string source_line;  // trimmed; empty when the interpreter printed none
  bool is_custom = false;

  bool operator==(const TracebackFrame&) const = default;
};

// One interpreter traceback. Frames run outermost call first, error site
// last. For chained exceptions the last-printed traceback is the primary and
// the earlier one hangs off `chained`.
struct ParsedTraceback {
  std::vector<TracebackFrame> frames;
  std::string exception_type;
  std::string exception_message;  // text after "Type: " on the final line only
  std::shared_ptr<ParsedTraceback> chained;

  bool equals(const ParsedTraceback& other) const;
};

// Deterministic parser for the interpreter's standard traceback text:
// the "Traceback (most recent call last):" form, the header-less
// syntax-error form (caret lines skipped), chained exceptions, and repeated
// frame notices. When several independent tracebacks appear in the stream,
// the last one wins. Throws NoTracebackError when nothing parses.
ParsedTraceback parse_traceback(const std::string& stderr_text);

// Standard text rendering of a parsed traceback. parse(render(tb)) yields a
// structure equal to tb.
std::string render_traceback(const ParsedTraceback& tb);

// Frames that lexically resolve under `workspace_root`, order preserved,
// is_custom set. Relative frame paths count as workspace-relative. Frames
// under interpreter install trees (site-packages, dist-packages, lib/python*)
// and pseudo-files ("<string>", "<frozen ...>") are never custom, even when
// nested inside the workspace.
std::vector<TracebackFrame> filter_custom_frames(const ParsedTraceback& tb,
                                                 const std::filesystem::path& workspace_root);

}  // namespace labloop
