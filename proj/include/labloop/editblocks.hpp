#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace labloop {

// One search/replace block from a model reply:
//
//   path/to/file.py
//   <<<<<<< SEARCH
//   exact existing lines
//   =======
//   replacement lines
//   >>>>>>> REPLACE
struct EditBlock {
  std::string file;  // relative path as written by the model
  std::string search;
  std::string replace;
};

// Extracts every well-formed block; malformed fragments are skipped. Code
// fences around blocks are tolerated.
std::vector<EditBlock> parse_edit_blocks(const std::string& reply);

struct EditOutcome {
  int applied = 0;
  // One entry per rejected block: target outside the editable set, missing
  // file, or SEARCH text not found.
  std::vector<std::string> rejected;
};

// Applies blocks to files under `workspace`. A block may only touch paths in
// `editable_files`; the SEARCH text must match exactly once-or-more (first
// occurrence is replaced). Exact-match failures reject the block loudly
// instead of guessing.
EditOutcome apply_edit_blocks(const std::filesystem::path& workspace,
                              const std::vector<std::string>& editable_files,
                              const std::vector<EditBlock>& blocks);

}  // namespace labloop
