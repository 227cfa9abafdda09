#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labloop/debugger.hpp"
#include "labloop/experiment.hpp"
#include "labloop/feedback.hpp"
#include "labloop/gateway.hpp"
#include "labloop/ideas.hpp"
#include "labloop/prompts.hpp"
#include "labloop/retrieval.hpp"

namespace labloop {

struct RunConfig {
  std::string topic;
  int n_loops = 1;
  int n_ideas = 20;
  double independence_tau = 0.8;
  int min_paper_score = 8;
  int retrieval_limit = 50;
  int max_debug_attempts = 5;
  double epsilon = 0.0;
  int novelty_search_limit = 10;
  BankPolicy bank_policy = BankPolicy::ineffective_priors;
  // 0 keeps every filtered paper as a reference; otherwise a seeded sample
  // of this size is drawn (order preserved).
  int max_references = 0;
  unsigned long seed = 0;
  int parallel_width = 1;
  std::string template_manifest;
  std::string templates_dir;  // empty = compiled-in prompts
  std::string state_dir = "labloop-state";
  std::string work_dir;  // empty = <state_dir>/workspaces
  GatewayConfig gateway;
  ScholarConfig scholar;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& doc);
};

struct LoopCounters {
  int loop_index = 0;
  int generated = 0;
  int independent = 0;
  int novel = 0;
  int executed_ok = 0;
  int improved = 0;
  double cost_usd = 0.0;  // ledger delta for this loop

  // improved <= executed_ok <= novel <= independent <= generated.
  void check_consistent() const;
};

// Persistent record of one run. Serializes to canonical JSON so equal states
// produce byte-identical files.
struct LoopState {
  static constexpr int kSchemaVersion = 1;

  RunConfig config;
  int loops_completed = 0;
  IdeaBank bank;  // ineffective prior ideas; empty before loop 1
  std::map<std::string, Idea> ideas;
  std::vector<FeedbackRecord> feedback;
  std::vector<LoopCounters> counters;
  std::string digest;  // feedback digest for the next loop
  Gateway::LedgerTotals ledger;
  // Oracle queue positions at the loop boundary, so a resumed replay run
  // picks up the script exactly where it stopped. Empty outside replay mode.
  std::map<std::string, std::size_t> replay_cursors;

  nlohmann::json to_json() const;
  static LoopState from_json(const nlohmann::json& doc);
};

void persist_state(const LoopState& state, const std::filesystem::path& path);
LoopState load_state(const std::filesystem::path& path);

struct LoopReport {
  struct Row {
    int loop_index = 0;
    int generated = 0;
    int independent = 0;
    int novel = 0;
    int executed_ok = 0;
    int improved = 0;
    double cost_usd = 0.0;
    double avg_cost_per_idea = 0.0;
  };
  std::vector<Row> rows;
  Row totals;            // loop_index unused
  bool no_ideas = false; // flags the zero-generated division guard

  std::string render_text() const;
  nlohmann::json to_json() const;
};

LoopReport make_report(const LoopState& state);

// The loop state machine: one instance owns a run from config (or restored
// state) through n_loops cycles, persisting after every loop boundary.
class Orchestrator {
 public:
  explicit Orchestrator(RunConfig config);
  // Resume path: picks up a loaded state, ledger and replay position included.
  explicit Orchestrator(LoopState state);

  // Runs the remaining loops, persists state and reports, and returns the
  // report. Loop-fatal errors persist the last consistent state first.
  LoopReport run();

  // One full cycle: retrieval -> ranking -> generation -> independence ->
  // novelty -> experiments (+ debug) -> feedback.
  void run_one_loop();

  const LoopState& state() const { return state_; }
  Gateway& gateway() { return gateway_; }
  std::filesystem::path state_file() const;
  void write_outputs();  // state.json, report.txt, report.json

 private:
  LoopState state_;
  Gateway gateway_;
  ScholarClient scholar_;
  PromptLibrary prompts_;

  struct IdeaRunResult {
    std::size_t index = 0;
    bool success = false;
    double metric = 0.0;
  };
  IdeaRunResult run_idea_pipeline(const Idea& idea, const CodeTemplate& tmpl,
                                  std::size_t index);
};

// Convenience used by the CLI: resume a persisted run, optionally raising
// the total loop count.
LoopReport resume_run(const std::filesystem::path& state_dir,
                      std::optional<int> n_loops_override);

}  // namespace labloop
