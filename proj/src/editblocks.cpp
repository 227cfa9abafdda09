#include "labloop/editblocks.hpp"

#include <algorithm>

#include "labloop/errors.hpp"
#include "labloop/util.hpp"

namespace labloop {

namespace {

const std::string kSearchMarker = "<<<<<<< SEARCH";
const std::string kSplitMarker = "=======";
const std::string kReplaceMarker = ">>>>>>> REPLACE";

bool is_fence(const std::string& line) {
  return trim(line).rfind("```", 0) == 0;
}

std::string join_lines(const std::vector<std::string>& lines, std::size_t begin,
                       std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    out += lines[i];
    if (i + 1 < end) {
      out += "\n";
    }
  }
  return out;
}

}  // namespace

std::vector<EditBlock> parse_edit_blocks(const std::string& reply) {
  std::vector<EditBlock> blocks;
  const std::vector<std::string> lines = split_lines(reply);
  std::size_t i = 0;
  while (i < lines.size()) {
    if (trim(lines[i]) != kSearchMarker) {
      ++i;
      continue;
    }
    // The nearest preceding non-blank, non-fence line names the file.
    std::string file;
    for (std::size_t back = i; back > 0; --back) {
      const std::string candidate = trim(lines[back - 1]);
      if (candidate.empty() || is_fence(candidate)) {
        continue;
      }
      file = candidate;
      break;
    }
    std::size_t split = i + 1;
    while (split < lines.size() && trim(lines[split]) != kSplitMarker) {
      ++split;
    }
    std::size_t close = split + 1;
    while (close < lines.size() && trim(lines[close]) != kReplaceMarker) {
      ++close;
    }
    if (file.empty() || split >= lines.size() || close >= lines.size()) {
      ++i;
      continue;  // malformed block; skip the marker and keep scanning
    }
    EditBlock block;
    block.file = file;
    block.search = join_lines(lines, i + 1, split);
    block.replace = join_lines(lines, split + 1, close);
    blocks.push_back(std::move(block));
    i = close + 1;
  }
  return blocks;
}

EditOutcome apply_edit_blocks(const std::filesystem::path& workspace,
                              const std::vector<std::string>& editable_files,
                              const std::vector<EditBlock>& blocks) {
  EditOutcome outcome;
  for (const auto& block : blocks) {
    const std::string normalized =
        std::filesystem::path(block.file).lexically_normal().generic_string();
    const bool editable =
        std::any_of(editable_files.begin(), editable_files.end(), [&](const std::string& f) {
          return std::filesystem::path(f).lexically_normal().generic_string() == normalized;
        });
    if (!editable) {
      outcome.rejected.push_back("block targets non-editable file: " + block.file);
      continue;
    }
    const std::filesystem::path target = workspace / normalized;
    if (!std::filesystem::exists(target)) {
      outcome.rejected.push_back("block targets missing file: " + block.file);
      continue;
    }
    std::string content = read_text_file(target);
    if (block.search.empty()) {
      // Empty SEARCH appends; covers "add new code at the end" replies.
      if (!content.empty() && content.back() != '\n') {
        content += "\n";
      }
      content += block.replace;
      if (!block.replace.empty() && block.replace.back() != '\n') {
        content += "\n";
      }
    } else {
      std::size_t pos = content.find(block.search);
      if (pos == std::string::npos) {
        outcome.rejected.push_back("SEARCH text not found in " + block.file);
        continue;
      }
      content.replace(pos, block.search.size(), block.replace);
    }
    write_text_file(target, content);
    ++outcome.applied;
  }
  return outcome;
}

}  // namespace labloop
