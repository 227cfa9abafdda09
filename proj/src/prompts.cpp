#include "labloop/prompts.hpp"

#include <regex>

#include "labloop/errors.hpp"
#include "labloop/util.hpp"

namespace labloop {

namespace {

const std::map<std::string, std::string>& builtin_templates() {
  static const std::map<std::string, std::string> kTemplates = {
      {"task_attributes", R"(You are an experienced researcher characterizing a research task.

Task topic: {{topic}}

Describe the defining attributes of this task. Reply with a single JSON object
and nothing else:
{"topic": "...", "model_inputs": "...", "model_outputs": "...", "other_characteristics": "..."}

Every field must be a non-empty string.)"},

      {"paper_scoring", R"(You are ranking retrieved papers for relevance to a research task.

Task topic: {{topic}}
Task attributes:
- model inputs: {{model_inputs}}
- model outputs: {{model_outputs}}
- other characteristics: {{other_characteristics}}

Candidate paper:
Title: {{title}}
Abstract: {{abstract}}

Score this paper from 1 to 10 considering (1) relevance to the task topic and
(2) how well the paper's task attributes match the attributes above. A paper on
a related but different task (different inputs or outputs) must score low.

Reply with exactly one line:
Score: <integer 1-10>)"},

      {"idea_generation", R"(You are an experienced researcher proposing new ideas for the task below.

Task topic: {{topic}}

Reference papers (title and abstract):
{{references}}

{{feedback}}

Propose {{n_ideas}} novel, mutually distinct ideas that could improve performance
on this task and can each be implemented by editing an existing code base.

Reply with a JSON array of exactly {{n_ideas}} objects and nothing else. Each object:
{"title": "...", "experiment_plan": "...", "summary": "..."}

"experiment_plan" is a brief plan for validating the idea; "summary" is a
self-contained description of the method. All fields must be non-empty.)"},

      {"novelty_check", R"(You are judging whether a proposed research idea is novel.

Idea title: {{title}}
Idea summary: {{summary}}

Related papers found for this idea:
{{search_results}}

If the idea substantially overlaps with any of the papers above, it is not
novel. Reply with exactly one line containing either NOVEL or NOT NOVEL,
optionally followed by a short justification.)"},

      {"plan_generation", R"(You are planning the experiment for an accepted research idea.

Idea title: {{title}}
Idea summary: {{summary}}
Initial sketch: {{experiment_plan}}

The experiment will be run by editing these files of an existing code base:
{{editable_files}}

Write a detailed step-by-step experimental plan. Reply with a numbered list,
one step per line, no other text. Each step must be concrete enough to act on.)"},

      {"code_edit", R"(You are implementing a research idea by editing an existing code base.

Idea title: {{title}}
Idea summary: {{summary}}
Plan:
{{plan}}

Current contents of the editable files:
{{files}}

Propose the code changes as one or more search/replace blocks, exactly in this
format (the SEARCH text must match the current file contents character for
character, and the file path line must be one of the editable files):

path/to/file.py
<<<<<<< SEARCH
lines to find
=======
replacement lines
>>>>>>> REPLACE

Only output search/replace blocks.)"},

      {"syntax_reflection", R"(Your previous edits left a file that fails the syntax check.

Syntax check output:
{{error}}

Current contents of the editable files:
{{files}}

Fix the syntax error. Reply only with search/replace blocks in the same
format as before (file path line, <<<<<<< SEARCH, =======, >>>>>>> REPLACE).)"},

      {"code_structure", R"(You are mapping the code involved in a failed experiment run.

These stack frames from the exception traceback point into the project's own
code (file, function, line, source):
{{frames}}

Contents of the involved files:
{{files}}

Render the local code structure around those frames: every class and function
that contains one of the frames, with its signature, its nesting shown by
indentation, and the failing lines marked with comments. Include only code
relevant to the frames above. Reply with the structure rendering only.)"},

      {"debug_fix", R"(An experiment run failed. Fix the code so it runs.

Exception traceback:
{{traceback}}

Local code structure around the failure:
{{structure}}

Current contents of the editable files:
{{files}}

Analyze the traceback and the code structure, then propose the fix as one or
more search/replace blocks, exactly in this format:

path/to/file.py
<<<<<<< SEARCH
lines to find
=======
replacement lines
>>>>>>> REPLACE

Only output search/replace blocks.)"},
  };
  return kTemplates;
}

}  // namespace

PromptLibrary PromptLibrary::builtin() {
  PromptLibrary lib;
  lib.templates_ = builtin_templates();
  return lib;
}

PromptLibrary PromptLibrary::from_directory(const std::filesystem::path& dir) {
  PromptLibrary lib = builtin();
  if (!std::filesystem::is_directory(dir)) {
    throw PreconditionError("template directory not found: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") {
      continue;
    }
    lib.templates_[entry.path().stem().string()] = read_text_file(entry.path());
  }
  return lib;
}

bool PromptLibrary::has(const std::string& name) const {
  return templates_.count(name) > 0;
}

const std::string& PromptLibrary::raw(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) {
    throw PreconditionError("unknown prompt template: " + name);
  }
  return it->second;
}

std::string PromptLibrary::render(const std::string& name,
                                  const std::map<std::string, std::string>& vars) const {
  std::string text = raw(name);
  for (const auto& [key, value] : vars) {
    const std::string placeholder = "{{" + key + "}}";
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
      text.replace(pos, placeholder.size(), value);
      pos += value.size();
    }
  }
  static const std::regex unresolved(R"(\{\{[A-Za-z0-9_]+\}\})");
  std::smatch m;
  if (std::regex_search(text, m, unresolved)) {
    throw PreconditionError("template " + name + ": unresolved placeholder " + m.str());
  }
  return text;
}

}  // namespace labloop
