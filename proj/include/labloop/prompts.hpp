#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace labloop {

// Named prompt templates with {{placeholder}} substitution. Templates load
// from plain-text files in a directory (one file per template, extension
// .txt) and fall back to compiled-in defaults, so a deployment can override
// any single prompt without shipping the whole set.
class PromptLibrary {
 public:
  static PromptLibrary builtin();
  static PromptLibrary from_directory(const std::filesystem::path& dir);

  bool has(const std::string& name) const;
  const std::string& raw(const std::string& name) const;

  // Throws if the template is unknown or a placeholder stays unresolved.
  std::string render(const std::string& name,
                     const std::map<std::string, std::string>& vars) const;

 private:
  std::map<std::string, std::string> templates_;
};

}  // namespace labloop
