#include "labloop/traceback.hpp"

#include <regex>

#include "labloop/errors.hpp"
#include "labloop/util.hpp"

namespace labloop {

namespace {

const std::string kHeader = "Traceback (most recent call last):";

const char* kChainSeparators[] = {
    "During handling of the above exception, another exception occurred:",
    "The above exception was the direct cause of the following exception:",
};

bool is_chain_separator(const std::string& line) {
  const std::string t = trim(line);
  for (const char* sep : kChainSeparators) {
    if (t == sep) {
      return true;
    }
  }
  return false;
}

bool is_indented(const std::string& line) {
  return !line.empty() && (line[0] == ' ' || line[0] == '\t');
}

// Caret/tilde location markers printed under the source line.
bool is_marker_line(const std::string& line) {
  bool saw_mark = false;
  for (char c : line) {
    if (c == '^' || c == '~') {
      saw_mark = true;
    } else if (c != ' ' && c != '\t') {
      return false;
    }
  }
  return saw_mark;
}

bool is_repeat_notice(const std::string& line) {
  const std::string t = trim(line);
  return t.rfind("[Previous line repeated", 0) == 0;
}

struct FileLine {
  std::string path;
  int line_number = 0;
  std::string function;  // empty in the syntax-error form
};

// `  File "<path>", line <n>` with an optional `, in <func>` suffix. The
// greedy path group pairs with the last ", line N" occurrence, so quotes and
// commas inside the path survive.
bool parse_file_line(const std::string& line, FileLine* out) {
  static const std::regex re(R"re(^\s+File "(.*)", line ([0-9]+)(?:, in (.*))?\s*$)re");
  std::smatch m;
  if (!is_indented(line) || !std::regex_match(line, m, re)) {
    return false;
  }
  out->path = m[1].str();
  out->line_number = std::stoi(m[2].str());
  out->function = m[3].matched ? m[3].str() : std::string();
  return true;
}

// Final line of a block: `Type: message`, `Type`, or a dotted type.
bool parse_exception_line(const std::string& line, std::string* type, std::string* message) {
  static const std::regex re(
      R"(^([A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)(?:: ?(.*))?$)");
  std::smatch m;
  if (is_indented(line) || !std::regex_match(line, m, re)) {
    return false;
  }
  *type = m[1].str();
  *message = m[2].matched ? m[2].str() : std::string();
  return true;
}

struct Block {
  ParsedTraceback tb;
  std::size_t end = 0;  // index one past the exception line
  bool valid = false;
};

// Parse one traceback block starting at `start` (the first frame line; any
// header has been consumed by the caller).
Block parse_block(const std::vector<std::string>& lines, std::size_t start) {
  Block block;
  std::size_t i = start;
  while (i < lines.size()) {
    const std::string& line = lines[i];
    FileLine fl;
    if (parse_file_line(line, &fl)) {
      TracebackFrame frame;
      frame.file_path = fl.path;
      frame.line_number = fl.line_number;
      frame.function_name = fl.function.empty() ? "<module>" : fl.function;
      ++i;
      // Source line plus any markers; stop at the next frame or a
      // non-indented line.
      FileLine peek;
      while (i < lines.size() && is_indented(lines[i]) && !parse_file_line(lines[i], &peek)) {
        if (!is_marker_line(lines[i]) && !is_repeat_notice(lines[i]) &&
            frame.source_line.empty()) {
          frame.source_line = trim(lines[i]);
        }
        ++i;
      }
      block.tb.frames.push_back(std::move(frame));
      continue;
    }
    if (is_repeat_notice(line)) {
      ++i;
      continue;
    }
    if (block.tb.frames.empty()) {
      return block;  // nothing recognizable where a frame was required
    }
    if (parse_exception_line(line, &block.tb.exception_type, &block.tb.exception_message)) {
      block.valid = true;
      block.end = i + 1;
      return block;
    }
    return block;  // unexpected line before the exception line: not a traceback
  }
  return block;
}

}  // namespace

bool ParsedTraceback::equals(const ParsedTraceback& other) const {
  if (frames != other.frames || exception_type != other.exception_type ||
      exception_message != other.exception_message) {
    return false;
  }
  if (static_cast<bool>(chained) != static_cast<bool>(other.chained)) {
    return false;
  }
  return !chained || chained->equals(*other.chained);
}

ParsedTraceback parse_traceback(const std::string& stderr_text) {
  if (stderr_text.empty()) {
    throw PreconditionError("parse_traceback: stderr must be non-empty");
  }
  const std::vector<std::string> lines = split_lines(stderr_text);

  // Collect valid blocks and the chain separators between them.
  std::vector<std::vector<ParsedTraceback>> chains;
  bool pending_link = false;
  std::size_t i = 0;
  while (i < lines.size()) {
    if (trim(lines[i]) == kHeader) {
      Block block = parse_block(lines, i + 1);
      if (block.valid) {
        if (pending_link && !chains.empty()) {
          chains.back().push_back(std::move(block.tb));
        } else {
          chains.push_back({std::move(block.tb)});
        }
        pending_link = false;
        i = block.end;
        continue;
      }
      ++i;
      continue;
    }
    FileLine fl;
    if (parse_file_line(lines[i], &fl)) {
      // Header-less syntax-error form.
      Block block = parse_block(lines, i);
      if (block.valid) {
        if (pending_link && !chains.empty()) {
          chains.back().push_back(std::move(block.tb));
        } else {
          chains.push_back({std::move(block.tb)});
        }
        pending_link = false;
        i = block.end;
        continue;
      }
      i = std::max(block.end, i + 1);
      continue;
    }
    if (is_chain_separator(lines[i])) {
      pending_link = !chains.empty();
      ++i;
      continue;
    }
    if (!trim(lines[i]).empty()) {
      pending_link = false;  // unrelated output breaks a chain in progress
    }
    ++i;
  }

  if (chains.empty()) {
    throw NoTracebackError("no traceback found in stderr");
  }

  // Last chain wins; within it the last-printed block is primary and each
  // earlier block nests underneath.
  std::vector<ParsedTraceback>& chain = chains.back();
  std::shared_ptr<ParsedTraceback> inner;
  for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
    auto node = std::make_shared<ParsedTraceback>(std::move(chain[k]));
    node->chained = inner;
    inner = node;
  }
  ParsedTraceback primary = std::move(chain.back());
  primary.chained = inner;
  return primary;
}

std::string render_traceback(const ParsedTraceback& tb) {
  std::string out;
  if (tb.chained) {
    out += render_traceback(*tb.chained);
    out += "\n";
    out += kChainSeparators[0];
    out += "\n\n";
  }
  out += kHeader;
  out += "\n";
  for (const auto& frame : tb.frames) {
    out += "  File \"" + frame.file_path + "\", line " + std::to_string(frame.line_number) +
           ", in " + frame.function_name + "\n";
    if (!frame.source_line.empty()) {
      out += "    " + frame.source_line + "\n";
    }
  }
  out += tb.exception_type;
  if (!tb.exception_message.empty()) {
    out += ": " + tb.exception_message;
  }
  out += "\n";
  return out;
}

namespace {

bool path_contains(const std::filesystem::path& root, const std::filesystem::path& p) {
  auto rit = root.begin();
  auto pit = p.begin();
  for (; rit != root.end(); ++rit, ++pit) {
    if (pit == p.end() || *rit != *pit) {
      return false;
    }
  }
  return true;
}

bool under_install_tree(const std::string& normalized) {
  return normalized.find("/site-packages/") != std::string::npos ||
         normalized.find("/dist-packages/") != std::string::npos ||
         normalized.find("/lib/python") != std::string::npos;
}

}  // namespace

std::vector<TracebackFrame> filter_custom_frames(const ParsedTraceback& tb,
                                                 const std::filesystem::path& workspace_root) {
  const std::filesystem::path root = workspace_root.lexically_normal();
  std::vector<TracebackFrame> custom;
  for (const auto& frame : tb.frames) {
    if (!frame.file_path.empty() && frame.file_path.front() == '<') {
      continue;  // "<string>", "<frozen ...>" and friends
    }
    std::filesystem::path p(frame.file_path);
    if (p.is_relative()) {
      p = root / p;
    }
    p = p.lexically_normal();
    if (!path_contains(root, p) || under_install_tree(p.generic_string())) {
      continue;
    }
    TracebackFrame copy = frame;
    copy.is_custom = true;
    custom.push_back(std::move(copy));
  }
  return custom;
}

}  // namespace labloop
