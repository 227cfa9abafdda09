#include <doctest.h>

#include "labloop/debugger.hpp"
#include "labloop/errors.hpp"
#include "labloop/util.hpp"
#include "test_support.hpp"

using namespace labloop;
using test::chat_entry;

namespace {

CodeTemplate fixture_template() {
  return CodeTemplate::load(test::fixtures_dir() / "experiment" / "manifest.json");
}

// Workspace copy with params.py broken so main.py raises a TypeError.
std::filesystem::path broken_workspace(const test::TempDir& work) {
  const auto ws = work.path / "ws";
  std::filesystem::copy(test::fixtures_dir() / "experiment" / "code", ws,
                        std::filesystem::copy_options::recursive);
  write_text_file(ws / "params.py", "DELTA = None\n");
  return ws;
}

const char* kStructureReply =
    "main.py\n"
    "  <module>  # entry\n"
    "  def main  # prints the metric\n"
    "  def compute  # line 5 fails here\n";

std::string fix_block(const std::string& search, const std::string& replace) {
  return "params.py\n<<<<<<< SEARCH\n" + search + "\n=======\n" + replace +
         "\n>>>>>>> REPLACE\n";
}

}  // namespace

TEST_CASE("mechanical outline lists class and function headers") {
  test::TempDir work;
  write_text_file(work.path / "model.py",
                  "import math\n\nclass Net:\n    def forward(self, x):\n        return "
                  "x\n\ndef helper():\n    pass\n");
  auto outline = mechanical_outline(work.path, {"model.py"});
  CHECK(outline.find("class Net") != std::string::npos);
  CHECK(outline.find("def forward") != std::string::npos);
  CHECK(outline.find("def helper") != std::string::npos);
  CHECK(outline.find("import math") == std::string::npos);
}

TEST_CASE("build_structure validates the rendering against frame functions") {
  test::TempDir work;
  auto ws = broken_workspace(work);
  auto outcome = run_entrypoint(ws, {"python3", "main.py"},
                                fixture_template().metric, 10);
  REQUIRE(outcome.kind == OutcomeKind::failure);
  auto tb = parse_traceback(outcome.stderr_tail);
  auto frames = filter_custom_frames(tb, ws);
  REQUIRE(frames.size() == 3);  // <module>, main, compute

  SUBCASE("a rendering naming every frame function is accepted") {
    test::TempDir dir;
    auto path = test::write_script(dir, {chat_entry("code_structure", kStructureReply)});
    Gateway gateway(test::replay_config(path));
    auto prompts = PromptLibrary::builtin();
    TracebackDebugger debugger(gateway, prompts);
    CHECK(debugger.build_structure(frames, ws) == kStructureReply);
  }

  SUBCASE("two incomplete renderings fall back to the mechanical outline") {
    test::TempDir dir;
    auto path = test::write_script(dir, {chat_entry("code_structure", "just main here"),
                                         chat_entry("code_structure", "main again")});
    Gateway gateway(test::replay_config(path));
    auto prompts = PromptLibrary::builtin();
    TracebackDebugger debugger(gateway, prompts);
    auto structure = debugger.build_structure(frames, ws);
    CHECK(structure.find("def main") != std::string::npos);
    CHECK(structure.find("def compute") != std::string::npos);
  }
}

TEST_CASE("debug_once applies the fix and consumes exactly one attempt") {
  test::TempDir work;
  auto ws = broken_workspace(work);
  auto tmpl = fixture_template();
  auto outcome = run_entrypoint(ws, tmpl.entrypoint, tmpl.metric, 10);
  auto tb = parse_traceback(outcome.stderr_tail);

  test::TempDir dir;
  auto path = test::write_script(
      dir, {chat_entry("debug_fix", fix_block("DELTA = None", "DELTA = 0.0"))});
  Gateway gateway(test::replay_config(path));
  auto prompts = PromptLibrary::builtin();
  TracebackDebugger debugger(gateway, prompts);

  DebugSession session;
  session.idea_id = "loop1-idea1";
  debugger.debug_once(ws, tmpl, tb, "structure", session);
  CHECK(session.attempts_used == 1);
  REQUIRE(session.transcript.size() == 1);
  CHECK(session.transcript[0].second.find("1 edit") != std::string::npos);
  CHECK(read_text_file(ws / "params.py") == "DELTA = 0.0\n");

  session.attempts_used = session.max_attempts;
  CHECK_THROWS_AS(debugger.debug_once(ws, tmpl, tb, "structure", session),
                  PreconditionError);
}

TEST_CASE("debug_once records a no-edit reply but still burns the attempt") {
  test::TempDir work;
  auto ws = broken_workspace(work);
  auto tmpl = fixture_template();
  auto outcome = run_entrypoint(ws, tmpl.entrypoint, tmpl.metric, 10);
  auto tb = parse_traceback(outcome.stderr_tail);

  test::TempDir dir;
  auto path = test::write_script(dir, {chat_entry("debug_fix", "I see no fix.")});
  Gateway gateway(test::replay_config(path));
  auto prompts = PromptLibrary::builtin();
  TracebackDebugger debugger(gateway, prompts);

  DebugSession session;
  session.idea_id = "x";
  debugger.debug_once(ws, tmpl, tb, "structure", session);
  CHECK(session.attempts_used == 1);
  CHECK(session.transcript[0].second == "no edits");
}

namespace {

DebugSession fresh_session(int max_attempts = 5) {
  DebugSession session;
  session.idea_id = "loop1-idea1";
  session.max_attempts = max_attempts;
  return session;
}

}  // namespace

TEST_CASE("debug_loop: scripted oracle fixes the bug on attempt 3") {
  test::TempDir work;
  auto ws = broken_workspace(work);
  auto tmpl = fixture_template();
  auto first = run_entrypoint(ws, tmpl.entrypoint, tmpl.metric, 10);
  REQUIRE(first.kind == OutcomeKind::failure);

  test::TempDir dir;
  auto path = test::write_script(
      dir, {chat_entry("code_structure", kStructureReply),
            chat_entry("debug_fix", fix_block("DELTA = None", "DELTA = None  # look")),
            chat_entry("debug_fix",
                       fix_block("DELTA = None  # look", "DELTA = None  # closer")),
            chat_entry("debug_fix", fix_block("DELTA = None  # closer", "DELTA = 1.0"))});
  Gateway gateway(test::replay_config(path));
  auto prompts = PromptLibrary::builtin();
  TracebackDebugger debugger(gateway, prompts);

  auto session = fresh_session();
  auto outcome = debugger.debug_loop(ws, tmpl, session, first);
  CHECK(outcome.kind == OutcomeKind::success);
  CHECK(*outcome.metric == doctest::Approx(81.0));
  CHECK(session.attempts_used == 3);
  CHECK(session.transcript.size() == 3);
}

TEST_CASE("debug_loop: a never-fixing oracle stops at exactly max attempts") {
  test::TempDir work;
  auto ws = broken_workspace(work);
  auto tmpl = fixture_template();
  auto first = run_entrypoint(ws, tmpl.entrypoint, tmpl.metric, 10);

  test::TempDir dir;
  auto path = test::write_script(dir, {chat_entry("code_structure", kStructureReply),
                                       chat_entry("debug_fix", "cannot figure this out")});
  Gateway gateway(test::replay_config(path));
  auto prompts = PromptLibrary::builtin();
  TracebackDebugger debugger(gateway, prompts);

  auto session = fresh_session();
  auto outcome = debugger.debug_loop(ws, tmpl, session, first);
  CHECK(outcome.kind == OutcomeKind::failure);
  CHECK(session.attempts_used == 5);
  CHECK(session.transcript.size() == 5);
}

TEST_CASE("debug_loop: success on the first re-execution") {
  test::TempDir work;
  auto ws = broken_workspace(work);
  auto tmpl = fixture_template();
  auto first = run_entrypoint(ws, tmpl.entrypoint, tmpl.metric, 10);

  test::TempDir dir;
  auto path = test::write_script(
      dir, {chat_entry("code_structure", kStructureReply),
            chat_entry("debug_fix", fix_block("DELTA = None", "DELTA = 2.0"))});
  Gateway gateway(test::replay_config(path));
  auto prompts = PromptLibrary::builtin();
  TracebackDebugger debugger(gateway, prompts);

  auto session = fresh_session();
  auto outcome = debugger.debug_loop(ws, tmpl, session, first);
  CHECK(outcome.kind == OutcomeKind::success);
  CHECK(session.attempts_used == 1);
}

TEST_CASE("debug_loop refuses timeouts and traceback-free failures") {
  test::TempDir work;
  auto ws = broken_workspace(work);
  auto tmpl = fixture_template();

  test::TempDir dir;
  auto path = test::write_script(dir, {});
  Gateway gateway(test::replay_config(path));
  auto prompts = PromptLibrary::builtin();
  TracebackDebugger debugger(gateway, prompts);

  ExecutionOutcome timeout;
  timeout.kind = OutcomeKind::timeout;
  auto session = fresh_session();
  auto outcome = debugger.debug_loop(ws, tmpl, session, timeout);
  CHECK(outcome.kind == OutcomeKind::timeout);
  CHECK(session.attempts_used == 0);

  ExecutionOutcome opaque;
  opaque.kind = OutcomeKind::failure;
  opaque.stderr_tail = "Killed\n";
  opaque.exit_code = 137;
  auto session2 = fresh_session();
  auto raw = debugger.debug_loop(ws, tmpl, session2, opaque);
  CHECK(raw.kind == OutcomeKind::failure);
  CHECK(raw.stderr_tail == "Killed\n");
  CHECK(session2.attempts_used == 0);
}
