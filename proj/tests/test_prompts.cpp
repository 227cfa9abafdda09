#include <doctest.h>

#include "labloop/errors.hpp"
#include "labloop/prompts.hpp"
#include "labloop/util.hpp"
#include "test_support.hpp"

using namespace labloop;

TEST_CASE("builtin templates cover every call-site tag") {
  auto lib = PromptLibrary::builtin();
  for (const char* name : {"task_attributes", "paper_scoring", "idea_generation",
                           "novelty_check", "plan_generation", "code_edit",
                           "syntax_reflection", "code_structure", "debug_fix"}) {
    CAPTURE(name);
    CHECK(lib.has(name));
  }
}

TEST_CASE("render substitutes every occurrence and rejects leftovers") {
  auto lib = PromptLibrary::builtin();
  auto text = lib.render("task_attributes", {{"topic", "3D classification"}});
  CHECK(text.find("3D classification") != std::string::npos);
  CHECK(text.find("{{topic}}") == std::string::npos);

  CHECK_THROWS_AS(lib.render("task_attributes", {}), PreconditionError);
  CHECK_THROWS_AS(lib.render("not_a_template", {{"x", "y"}}), PreconditionError);
}

TEST_CASE("directory templates override builtins") {
  test::TempDir dir;
  write_text_file(dir.path / "task_attributes.txt", "custom: {{topic}}");
  write_text_file(dir.path / "notes.md", "ignored, wrong extension");
  auto lib = PromptLibrary::from_directory(dir.path);
  CHECK(lib.render("task_attributes", {{"topic", "x"}}) == "custom: x");
  CHECK(lib.has("paper_scoring"));  // builtin fallback intact
  CHECK_FALSE(lib.has("notes"));

  CHECK_THROWS_AS(PromptLibrary::from_directory(dir.path / "missing"), PreconditionError);
}
