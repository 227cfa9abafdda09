#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "labloop/experiment.hpp"
#include "labloop/gateway.hpp"
#include "labloop/prompts.hpp"
#include "labloop/traceback.hpp"

namespace labloop {

struct DebugSession {
  std::string idea_id;
  int attempts_used = 0;
  int max_attempts = 5;
  // One entry per attempt: (traceback digest, edit summary).
  std::vector<std::pair<std::string, std::string>> transcript;
};

// Mechanical outline of the files' class/function headers; the fallback
// structure when the model cannot produce a validated rendering.
std::string mechanical_outline(const std::filesystem::path& workspace,
                               const std::vector<std::string>& files);

class TracebackDebugger {
 public:
  TracebackDebugger(Gateway& gateway, const PromptLibrary& prompts);

  // Asks the model for an error-scoped code structure rendering and checks
  // that every frame's function name appears in it (one re-ask). Falls back
  // to the mechanical outline so debugging can always proceed.
  std::string build_structure(const std::vector<TracebackFrame>& frames,
                              const std::filesystem::path& workspace);

  // One repair round: traceback + structure -> edit blocks. Always consumes
  // exactly one attempt, even when the reply holds no applicable edits.
  void debug_once(const std::filesystem::path& workspace, const CodeTemplate& tmpl,
                  const ParsedTraceback& tb, const std::string& structure,
                  DebugSession& session);

  // parse -> filter -> structure -> debug_once -> execute, repeated until
  // success or the attempt cap. Timeouts and failures without a traceback
  // are not debuggable and end the loop immediately.
  ExecutionOutcome debug_loop(const std::filesystem::path& workspace, const CodeTemplate& tmpl,
                              DebugSession& session, ExecutionOutcome first_failure);

 private:
  Gateway& gateway_;
  const PromptLibrary& prompts_;
};

}  // namespace labloop
