// labloop command line: run research loops, resume them, print reports.

#include <CLI11.hpp>
#include <iostream>

#include "labloop/errors.hpp"
#include "labloop/orchestrator.hpp"
#include "labloop/util.hpp"

namespace {

struct RunFlags {
  std::string config_file;
  std::string topic;
  int loops = 0;
  int ideas_per_loop = 0;
  double independence_threshold = 0.0;
  int min_paper_score = 0;
  int max_debug_attempts = 0;
  int retrieval_limit = 0;
  double epsilon = 0.0;
  std::string template_manifest;
  std::string templates_dir;
  std::string mode;
  std::string oracle;
  std::string state_dir;
  std::string work_dir;
  std::string chat_endpoint;
  std::string embed_endpoint;
  std::string chat_model;
  std::string embed_model;
  std::string papers_endpoint;
  std::string papers_fixture;
  int parallel_width = 0;
  unsigned long seed = 0;
  bool no_strict_replay = false;
};

labloop::RunConfig build_config(const CLI::App& cmd, const RunFlags& flags) {
  labloop::RunConfig config;
  if (!flags.config_file.empty()) {
    auto doc = nlohmann::json::parse(labloop::read_text_file(flags.config_file), nullptr, false);
    if (doc.is_discarded()) {
      throw labloop::PreconditionError("config file is not valid JSON: " + flags.config_file);
    }
    config = labloop::RunConfig::from_json(doc);
  }
  // Flags override the config file.
  if (cmd.count("--topic")) config.topic = flags.topic;
  if (cmd.count("--loops")) config.n_loops = flags.loops;
  if (cmd.count("--ideas-per-loop")) config.n_ideas = flags.ideas_per_loop;
  if (cmd.count("--independence-threshold"))
    config.independence_tau = flags.independence_threshold;
  if (cmd.count("--min-paper-score")) config.min_paper_score = flags.min_paper_score;
  if (cmd.count("--max-debug-attempts")) config.max_debug_attempts = flags.max_debug_attempts;
  if (cmd.count("--retrieval-limit")) config.retrieval_limit = flags.retrieval_limit;
  if (cmd.count("--epsilon")) config.epsilon = flags.epsilon;
  if (cmd.count("--template")) config.template_manifest = flags.template_manifest;
  if (cmd.count("--templates-dir")) config.templates_dir = flags.templates_dir;
  if (cmd.count("--mode")) config.gateway.mode = labloop::gateway_mode_from_string(flags.mode);
  if (cmd.count("--oracle")) config.gateway.oracle_path = flags.oracle;
  if (cmd.count("--state-dir")) config.state_dir = flags.state_dir;
  if (cmd.count("--work-dir")) config.work_dir = flags.work_dir;
  if (cmd.count("--chat-endpoint")) config.gateway.chat_endpoint = flags.chat_endpoint;
  if (cmd.count("--embed-endpoint")) config.gateway.embed_endpoint = flags.embed_endpoint;
  if (cmd.count("--chat-model")) config.gateway.chat_model = flags.chat_model;
  if (cmd.count("--embed-model")) config.gateway.embed_model = flags.embed_model;
  if (cmd.count("--papers-endpoint")) config.scholar.endpoint = flags.papers_endpoint;
  if (cmd.count("--papers-fixture")) config.scholar.fixture_path = flags.papers_fixture;
  if (cmd.count("--parallel-width")) config.parallel_width = flags.parallel_width;
  if (cmd.count("--seed")) config.seed = flags.seed;
  if (flags.no_strict_replay) config.gateway.strict_replay = false;
  return config;
}

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--config", flags.config_file, "JSON config file (flags override it)");
  cmd->add_option("--topic", flags.topic, "research topic to work on");
  cmd->add_option("--loops", flags.loops, "number of research loops");
  cmd->add_option("--ideas-per-loop", flags.ideas_per_loop, "ideas generated per loop");
  cmd->add_option("--independence-threshold", flags.independence_threshold,
                  "cosine similarity threshold for the independence check");
  cmd->add_option("--min-paper-score", flags.min_paper_score,
                  "papers scoring below this are dropped");
  cmd->add_option("--max-debug-attempts", flags.max_debug_attempts,
                  "debug attempts per failing experiment");
  cmd->add_option("--retrieval-limit", flags.retrieval_limit, "papers to retrieve per query");
  cmd->add_option("--epsilon", flags.epsilon, "metric tolerance for the maintenance band");
  cmd->add_option("--template", flags.template_manifest, "code template manifest (JSON)");
  cmd->add_option("--templates-dir", flags.templates_dir, "prompt template directory");
  cmd->add_option("--mode", flags.mode, "gateway mode: live|record|replay")
      ->check(CLI::IsMember({"live", "record", "replay"}));
  cmd->add_option("--oracle", flags.oracle, "oracle script path (replay input/record output)");
  cmd->add_option("--state-dir", flags.state_dir, "directory for state and reports");
  cmd->add_option("--work-dir", flags.work_dir, "directory for experiment workspaces");
  cmd->add_option("--chat-endpoint", flags.chat_endpoint, "chat completion endpoint URL");
  cmd->add_option("--embed-endpoint", flags.embed_endpoint, "embedding endpoint URL");
  cmd->add_option("--chat-model", flags.chat_model, "chat model name");
  cmd->add_option("--embed-model", flags.embed_model, "embedding model name");
  cmd->add_option("--papers-endpoint", flags.papers_endpoint, "scholarly search base URL");
  cmd->add_option("--papers-fixture", flags.papers_fixture,
                  "JSON file served as the scholarly search response (offline runs)");
  cmd->add_option("--parallel-width", flags.parallel_width,
                  "experiment executions run at once");
  cmd->add_option("--seed", flags.seed, "seed for reference sampling");
  cmd->add_flag("--no-strict-replay", flags.no_strict_replay,
                "mark recorded oracle scripts non-strict (replay reads the "
                "flag from the script file)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"closed-loop research orchestration"};
  app.require_subcommand(1);

  RunFlags flags;
  CLI::App* run_cmd = app.add_subcommand("run", "run research loops from scratch");
  add_run_flags(run_cmd, flags);

  std::string resume_state_dir;
  int resume_loops = -1;
  CLI::App* resume_cmd = app.add_subcommand("resume", "continue a persisted run");
  resume_cmd->add_option("--state-dir", resume_state_dir, "directory holding state.json")
      ->required();
  resume_cmd->add_option("--loops", resume_loops,
                         "new total loop count (defaults to the persisted target)");

  std::string report_state_dir;
  bool report_json = false;
  CLI::App* report_cmd = app.add_subcommand("report", "print the loop report");
  report_cmd->add_option("--state-dir", report_state_dir, "directory holding state.json")
      ->required();
  report_cmd->add_flag("--json", report_json, "emit JSON instead of the text table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      labloop::Orchestrator orch(build_config(*run_cmd, flags));
      labloop::LoopReport report = orch.run();
      std::cout << report.render_text();
      return 0;
    }
    if (resume_cmd->parsed()) {
      std::optional<int> override_loops;
      if (resume_loops >= 0) {
        override_loops = resume_loops;
      }
      labloop::LoopReport report = labloop::resume_run(resume_state_dir, override_loops);
      std::cout << report.render_text();
      return 0;
    }
    if (report_cmd->parsed()) {
      labloop::LoopState state =
          labloop::load_state(std::filesystem::path(report_state_dir) / "state.json");
      labloop::LoopReport report = labloop::make_report(state);
      if (report_json) {
        std::cout << labloop::canonical_json(report.to_json());
      } else {
        std::cout << report.render_text();
      }
      return 0;
    }
  } catch (const labloop::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
