#include "labloop/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "labloop/errors.hpp"
#include "labloop/util.hpp"

namespace labloop {

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  if (trim(topic).empty()) {
    throw PreconditionError("config: topic must be non-empty");
  }
  if (n_loops < 0) {
    throw PreconditionError("config: loops must be >= 0");
  }
  if (n_ideas < 1) {
    throw PreconditionError("config: ideas per loop must be >= 1");
  }
  if (!(independence_tau > 0.0 && independence_tau <= 1.0)) {
    throw PreconditionError("config: independence threshold must be in (0, 1]");
  }
  if (min_paper_score < 1 || min_paper_score > 10) {
    throw PreconditionError("config: min paper score must be in [1, 10]");
  }
  if (retrieval_limit < 1) {
    throw PreconditionError("config: retrieval limit must be >= 1");
  }
  if (max_debug_attempts < 1) {
    throw PreconditionError("config: max debug attempts must be >= 1");
  }
  if (epsilon < 0.0) {
    throw PreconditionError("config: epsilon must be >= 0");
  }
  if (parallel_width < 1) {
    throw PreconditionError("config: parallel width must be >= 1");
  }
  if (template_manifest.empty()) {
    throw PreconditionError("config: template manifest path required");
  }
  if (state_dir.empty()) {
    throw PreconditionError("config: state directory required");
  }
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"topic", topic},
      {"loops", n_loops},
      {"ideas_per_loop", n_ideas},
      {"independence_threshold", independence_tau},
      {"min_paper_score", min_paper_score},
      {"retrieval_limit", retrieval_limit},
      {"max_debug_attempts", max_debug_attempts},
      {"epsilon", epsilon},
      {"novelty_search_limit", novelty_search_limit},
      {"bank_policy", to_string(bank_policy)},
      {"max_references", max_references},
      {"seed", seed},
      {"parallel_width", parallel_width},
      {"template_manifest", template_manifest},
      {"templates_dir", templates_dir},
      {"state_dir", state_dir},
      {"work_dir", work_dir},
      {"gateway",
       {{"mode", to_string(gateway.mode)},
        {"chat_endpoint", gateway.chat_endpoint},
        {"embed_endpoint", gateway.embed_endpoint},
        {"chat_model", gateway.chat_model},
        {"embed_model", gateway.embed_model},
        {"api_key_env", gateway.api_key_env},
        {"chat_rates", {{"input", gateway.chat_rates.input}, {"output", gateway.chat_rates.output}}},
        {"embed_rates",
         {{"input", gateway.embed_rates.input}, {"output", gateway.embed_rates.output}}},
        {"oracle", gateway.oracle_path},
        {"strict_replay", gateway.strict_replay},
        {"max_retries", gateway.max_retries},
        {"http_timeout_s", gateway.http_timeout_s}}},
      {"scholar",
       {{"endpoint", scholar.endpoint},
        {"fixture", scholar.fixture_path},
        {"api_key_env", scholar.api_key_env}}},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  RunConfig config;
  config.topic = doc.value("topic", config.topic);
  config.n_loops = doc.value("loops", config.n_loops);
  config.n_ideas = doc.value("ideas_per_loop", config.n_ideas);
  config.independence_tau = doc.value("independence_threshold", config.independence_tau);
  config.min_paper_score = doc.value("min_paper_score", config.min_paper_score);
  config.retrieval_limit = doc.value("retrieval_limit", config.retrieval_limit);
  config.max_debug_attempts = doc.value("max_debug_attempts", config.max_debug_attempts);
  config.epsilon = doc.value("epsilon", config.epsilon);
  config.novelty_search_limit = doc.value("novelty_search_limit", config.novelty_search_limit);
  config.bank_policy =
      bank_policy_from_string(doc.value("bank_policy", to_string(config.bank_policy)));
  config.max_references = doc.value("max_references", config.max_references);
  config.seed = doc.value("seed", config.seed);
  config.parallel_width = doc.value("parallel_width", config.parallel_width);
  config.template_manifest = doc.value("template_manifest", config.template_manifest);
  config.templates_dir = doc.value("templates_dir", config.templates_dir);
  config.state_dir = doc.value("state_dir", config.state_dir);
  config.work_dir = doc.value("work_dir", config.work_dir);
  if (doc.contains("gateway")) {
    const auto& g = doc["gateway"];
    config.gateway.mode = gateway_mode_from_string(g.value("mode", std::string("replay")));
    config.gateway.chat_endpoint = g.value("chat_endpoint", config.gateway.chat_endpoint);
    config.gateway.embed_endpoint = g.value("embed_endpoint", config.gateway.embed_endpoint);
    config.gateway.chat_model = g.value("chat_model", config.gateway.chat_model);
    config.gateway.embed_model = g.value("embed_model", config.gateway.embed_model);
    config.gateway.api_key_env = g.value("api_key_env", config.gateway.api_key_env);
    if (g.contains("chat_rates")) {
      config.gateway.chat_rates.input = g["chat_rates"].value("input", 0.0);
      config.gateway.chat_rates.output = g["chat_rates"].value("output", 0.0);
    }
    if (g.contains("embed_rates")) {
      config.gateway.embed_rates.input = g["embed_rates"].value("input", 0.0);
      config.gateway.embed_rates.output = g["embed_rates"].value("output", 0.0);
    }
    config.gateway.oracle_path = g.value("oracle", config.gateway.oracle_path);
    config.gateway.strict_replay = g.value("strict_replay", config.gateway.strict_replay);
    config.gateway.max_retries = g.value("max_retries", config.gateway.max_retries);
    config.gateway.http_timeout_s = g.value("http_timeout_s", config.gateway.http_timeout_s);
  }
  if (doc.contains("scholar")) {
    const auto& s = doc["scholar"];
    config.scholar.endpoint = s.value("endpoint", config.scholar.endpoint);
    config.scholar.fixture_path = s.value("fixture", config.scholar.fixture_path);
    config.scholar.api_key_env = s.value("api_key_env", config.scholar.api_key_env);
  }
  return config;
}

// ---------------------------------------------------------------------------
// LoopCounters / LoopState

void LoopCounters::check_consistent() const {
  const bool ok = improved <= executed_ok && executed_ok <= novel && novel <= independent &&
                  independent <= generated && improved >= 0;
  if (!ok) {
    throw StateError("inconsistent counters in loop " + std::to_string(loop_index) + ": " +
                     std::to_string(improved) + "/" + std::to_string(executed_ok) + "/" +
                     std::to_string(novel) + "/" + std::to_string(independent) + "/" +
                     std::to_string(generated));
  }
}

namespace {

nlohmann::json idea_to_json(const Idea& idea) {
  nlohmann::json doc = {{"id", idea.id},
                        {"title", idea.title},
                        {"experiment_plan", idea.experiment_plan},
                        {"summary", idea.summary},
                        {"status", to_string(idea.status)},
                        {"loop_index", idea.loop_index}};
  if (idea.embedding) {
    doc["embedding"] = idea.embedding->values;
  }
  return doc;
}

Idea idea_from_json(const nlohmann::json& doc) {
  Idea idea;
  idea.id = doc.at("id").get<std::string>();
  idea.title = doc.at("title").get<std::string>();
  idea.experiment_plan = doc.at("experiment_plan").get<std::string>();
  idea.summary = doc.at("summary").get<std::string>();
  idea.status = idea_status_from_string(doc.at("status").get<std::string>());
  idea.loop_index = doc.at("loop_index").get<int>();
  if (doc.contains("embedding")) {
    EmbeddingVector vec;
    vec.values = doc["embedding"].get<std::vector<double>>();
    idea.embedding = std::move(vec);
  }
  return idea;
}

}  // namespace

nlohmann::json LoopState::to_json() const {
  nlohmann::json ideas_doc = nlohmann::json::object();
  for (const auto& [id, idea] : ideas) {
    ideas_doc[id] = idea_to_json(idea);
  }
  nlohmann::json feedback_doc = nlohmann::json::array();
  for (const auto& record : feedback) {
    feedback_doc.push_back({{"idea_id", record.idea_id},
                            {"baseline_metric", record.baseline_metric},
                            {"achieved_metric", record.achieved_metric},
                            {"category", to_string(record.category)},
                            {"loop_index", record.loop_index}});
  }
  nlohmann::json counters_doc = nlohmann::json::array();
  for (const auto& c : counters) {
    counters_doc.push_back({{"loop_index", c.loop_index},
                            {"generated", c.generated},
                            {"independent", c.independent},
                            {"novel", c.novel},
                            {"executed_ok", c.executed_ok},
                            {"improved", c.improved},
                            {"cost_usd", c.cost_usd}});
  }
  return {{"version", kSchemaVersion},
          {"config", config.to_json()},
          {"loops_completed", loops_completed},
          {"bank", bank.to_json()},
          {"ideas", ideas_doc},
          {"feedback", feedback_doc},
          {"counters", counters_doc},
          {"digest", digest},
          {"ledger", {{"total_usd", ledger.total_usd}, {"per_tag", ledger.per_tag}}},
          {"replay_cursors", replay_cursors}};
}

LoopState LoopState::from_json(const nlohmann::json& doc) {
  const int version = doc.value("version", -1);
  if (version != kSchemaVersion) {
    throw StateError("state schema version " + std::to_string(version) +
                     " not supported (this build reads version " +
                     std::to_string(kSchemaVersion) + ")");
  }
  LoopState state;
  state.config = RunConfig::from_json(doc.at("config"));
  state.loops_completed = doc.at("loops_completed").get<int>();
  state.bank = IdeaBank::from_json(doc.at("bank"));
  for (const auto& [id, idea_doc] : doc.at("ideas").items()) {
    state.ideas[id] = idea_from_json(idea_doc);
  }
  for (const auto& record_doc : doc.at("feedback")) {
    FeedbackRecord record;
    record.idea_id = record_doc.at("idea_id").get<std::string>();
    record.baseline_metric = record_doc.at("baseline_metric").get<double>();
    record.achieved_metric = record_doc.at("achieved_metric").get<double>();
    record.category = result_category_from_string(record_doc.at("category").get<std::string>());
    record.loop_index = record_doc.at("loop_index").get<int>();
    state.feedback.push_back(std::move(record));
  }
  for (const auto& c_doc : doc.at("counters")) {
    LoopCounters c;
    c.loop_index = c_doc.at("loop_index").get<int>();
    c.generated = c_doc.at("generated").get<int>();
    c.independent = c_doc.at("independent").get<int>();
    c.novel = c_doc.at("novel").get<int>();
    c.executed_ok = c_doc.at("executed_ok").get<int>();
    c.improved = c_doc.at("improved").get<int>();
    c.cost_usd = c_doc.at("cost_usd").get<double>();
    c.check_consistent();
    state.counters.push_back(c);
  }
  state.digest = doc.value("digest", std::string());
  if (doc.contains("ledger")) {
    state.ledger.total_usd = doc["ledger"].value("total_usd", 0.0);
    if (doc["ledger"].contains("per_tag")) {
      state.ledger.per_tag =
          doc["ledger"]["per_tag"].get<std::map<std::string, double>>();
    }
  }
  if (doc.contains("replay_cursors")) {
    state.replay_cursors =
        doc["replay_cursors"].get<std::map<std::string, std::size_t>>();
  }
  return state;
}

void persist_state(const LoopState& state, const std::filesystem::path& path) {
  write_text_file_atomic(path, canonical_json(state.to_json()));
}

LoopState load_state(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw StateError(e.what());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw StateError("corrupt state file " + path.string() + " at byte " +
                     std::to_string(e.byte) + ": " + e.what());
  }
  try {
    return LoopState::from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw StateError("state file " + path.string() + " is missing fields: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// LoopReport

LoopReport make_report(const LoopState& state) {
  LoopReport report;
  for (const auto& c : state.counters) {
    LoopReport::Row row;
    row.loop_index = c.loop_index;
    row.generated = c.generated;
    row.independent = c.independent;
    row.novel = c.novel;
    row.executed_ok = c.executed_ok;
    row.improved = c.improved;
    row.cost_usd = c.cost_usd;
    row.avg_cost_per_idea = c.generated > 0 ? c.cost_usd / c.generated : 0.0;
    report.rows.push_back(row);
    report.totals.generated += c.generated;
    report.totals.independent += c.independent;
    report.totals.novel += c.novel;
    report.totals.executed_ok += c.executed_ok;
    report.totals.improved += c.improved;
    report.totals.cost_usd += c.cost_usd;
  }
  report.no_ideas = report.totals.generated == 0;
  report.totals.avg_cost_per_idea =
      report.no_ideas ? 0.0 : report.totals.cost_usd / report.totals.generated;
  return report;
}

namespace {

std::string fixed3(double value) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << value;
  return out.str();
}

std::string pad(const std::string& text, std::size_t width) {
  return text.size() >= width ? text : text + std::string(width - text.size(), ' ');
}

}  // namespace

std::string LoopReport::render_text() const {
  // Executed is reported against the ideas that passed both checks, and
  // Improved against the successfully executed ones.
  std::vector<std::vector<std::string>> table;
  table.push_back({"Loop", "Generated", "Independent", "Novel", "Executed", "Improved",
                   "Cost/idea"});
  auto row_cells = [](const Row& row, const std::string& label) {
    return std::vector<std::string>{
        label,
        std::to_string(row.generated),
        std::to_string(row.independent),
        std::to_string(row.novel),
        std::to_string(row.executed_ok) + " / " + std::to_string(row.novel),
        std::to_string(row.improved) + " / " + std::to_string(row.executed_ok),
        fixed3(row.avg_cost_per_idea)};
  };
  for (const auto& row : rows) {
    table.push_back(row_cells(row, std::to_string(row.loop_index)));
  }
  table.push_back(row_cells(totals, "Total"));

  std::vector<std::size_t> widths(table[0].size(), 0);
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      widths[i] = std::max(widths[i], row[i].size());
    }
  }
  std::string out;
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += pad(row[i], widths[i] + (i + 1 < row.size() ? 2 : 0));
    }
    while (!out.empty() && out.back() == ' ') {
      out.pop_back();
    }
    out += "\n";
  }
  if (no_ideas) {
    out += "note: no ideas generated; average cost reported as 0\n";
  }
  return out;
}

nlohmann::json LoopReport::to_json() const {
  auto row_json = [](const Row& row) {
    return nlohmann::json{{"generated", row.generated},
                          {"independent", row.independent},
                          {"novel", row.novel},
                          {"executed_ok", row.executed_ok},
                          {"improved", row.improved},
                          {"cost_usd", row.cost_usd},
                          {"avg_cost_per_idea", row.avg_cost_per_idea}};
  };
  nlohmann::json loops = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json doc = row_json(row);
    doc["loop_index"] = row.loop_index;
    loops.push_back(doc);
  }
  nlohmann::json doc = {{"loops", loops}, {"totals", row_json(totals)}};
  if (no_ideas) {
    doc["no_ideas"] = true;
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Orchestrator

namespace {

PromptLibrary make_prompts(const RunConfig& config) {
  return config.templates_dir.empty() ? PromptLibrary::builtin()
                                      : PromptLibrary::from_directory(config.templates_dir);
}

const RunConfig& validated(const RunConfig& config) {
  config.validate();
  return config;
}

}  // namespace

Orchestrator::Orchestrator(RunConfig config)
    : state_(), gateway_(validated(config).gateway), scholar_(config.scholar),
      prompts_(make_prompts(config)) {
  state_.config = std::move(config);
}

Orchestrator::Orchestrator(LoopState state)
    : state_(std::move(state)), gateway_(validated(state_.config).gateway),
      scholar_(state_.config.scholar), prompts_(make_prompts(state_.config)) {
  gateway_.restore_ledger(state_.ledger);
  gateway_.restore_replay_cursors(state_.replay_cursors);
}

std::filesystem::path Orchestrator::state_file() const {
  return std::filesystem::path(state_.config.state_dir) / "state.json";
}

Orchestrator::IdeaRunResult Orchestrator::run_idea_pipeline(const Idea& idea,
                                                            const CodeTemplate& tmpl,
                                                            std::size_t index) {
  IdeaRunResult result;
  result.index = index;
  ExperimentRunner runner(gateway_, prompts_);
  TracebackDebugger debugger(gateway_, prompts_);

  const std::filesystem::path work_root =
      state_.config.work_dir.empty()
          ? std::filesystem::path(state_.config.state_dir) / "workspaces"
          : std::filesystem::path(state_.config.work_dir);

  ExperimentPlan plan = runner.generate_plan(idea, tmpl);
  const std::filesystem::path workspace =
      runner.materialize_workspace(tmpl, idea.id, work_root);
  runner.apply_edits(workspace, tmpl, plan, idea);
  ExecutionOutcome outcome = runner.execute(workspace, tmpl);
  if (outcome.kind != OutcomeKind::success) {
    DebugSession session;
    session.idea_id = idea.id;
    session.max_attempts = state_.config.max_debug_attempts;
    outcome = debugger.debug_loop(workspace, tmpl, session, std::move(outcome));
  }
  if (outcome.kind == OutcomeKind::success) {
    result.success = true;
    result.metric = *outcome.metric;
  }
  return result;
}

void Orchestrator::run_one_loop() {
  const RunConfig& config = state_.config;
  const int loop_index = state_.loops_completed + 1;
  const double cost_before = gateway_.ledger_total().total_usd;

  CodeTemplate tmpl = CodeTemplate::load(config.template_manifest);

  // Retrieval and ranking.
  PaperRanker ranker(gateway_, prompts_);
  std::vector<PaperRecord> papers = scholar_.search(config.topic, config.retrieval_limit);
  TaskAttributes attrs = ranker.extract_task_attributes(config.topic);
  ranker.score_papers(papers, attrs);
  std::vector<PaperRecord> references = filter_by_score(papers, config.min_paper_score);
  if (config.max_references > 0 &&
      static_cast<int>(references.size()) > config.max_references) {
    std::mt19937_64 rng(config.seed ^ static_cast<unsigned long>(loop_index));
    std::vector<PaperRecord> sampled;
    std::sample(references.begin(), references.end(), std::back_inserter(sampled),
                config.max_references, rng);
    references = std::move(sampled);
  }

  // Generation and filtering.
  GenerationContext ctx;
  ctx.topic = config.topic;
  ctx.references = references;
  ctx.feedback_digest = state_.digest;
  ctx.n_ideas = config.n_ideas;
  IdeaEngine engine(gateway_, prompts_, scholar_, config.novelty_search_limit);
  GenerationResult generation = engine.generate_ideas(ctx, loop_index);
  std::vector<Idea>& ideas = generation.ideas;

  LoopCounters counters;
  counters.loop_index = loop_index;
  counters.generated = static_cast<int>(ideas.size());

  for (auto& idea : ideas) {
    idea.embedding = gateway_.embed(idea.summary, "idea_embedding");
  }

  // The persistent bank holds ineffective priors only; the sweep works on a
  // scratch copy so this loop's accepted embeddings don't outlive the check.
  IdeaBank sweep_bank = state_.bank;
  std::vector<bool> accepted = independence_check(ideas, sweep_bank, config.independence_tau);
  counters.independent = static_cast<int>(std::count(accepted.begin(), accepted.end(), true));

  std::vector<std::size_t> surviving;
  for (std::size_t i = 0; i < ideas.size(); ++i) {
    if (accepted[i] && engine.novelty_check(ideas[i])) {
      surviving.push_back(i);
    }
  }
  counters.novel = static_cast<int>(surviving.size());
  for (std::size_t i : surviving) {
    ideas[i].advance_status(IdeaStatus::pending_experiment);
  }

  // Experiments, fanned out at most parallel_width at a time, results
  // handled in idea order.
  std::vector<IdeaRunResult> results(surviving.size());
  std::vector<std::exception_ptr> errors(surviving.size());
  for (std::size_t base = 0; base < surviving.size();
       base += static_cast<std::size_t>(config.parallel_width)) {
    const std::size_t chunk_end =
        std::min(surviving.size(), base + static_cast<std::size_t>(config.parallel_width));
    std::vector<std::thread> pool;
    for (std::size_t k = base; k < chunk_end; ++k) {
      pool.emplace_back([this, &ideas, &tmpl, &results, &errors, &surviving, k] {
        try {
          results[k] = run_idea_pipeline(ideas[surviving[k]], tmpl, k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) {
      t.join();
    }
  }

  std::vector<FeedbackRecord> loop_records;
  for (std::size_t k = 0; k < surviving.size(); ++k) {
    Idea& idea = ideas[surviving[k]];
    if (errors[k]) {
      try {
        std::rethrow_exception(errors[k]);
      } catch (const ReplayMissError&) {
        throw;  // a broken script is fatal, not an experiment failure
      } catch (const Error&) {
        idea.advance_status(IdeaStatus::failed_execution);
        continue;
      }
    }
    if (results[k].success) {
      loop_records.push_back(make_feedback_record(idea.id, tmpl.baseline_metric,
                                                  results[k].metric, config.epsilon,
                                                  loop_index, tmpl.higher_is_better));
    } else {
      idea.advance_status(IdeaStatus::failed_execution);
    }
  }
  counters.executed_ok = static_cast<int>(loop_records.size());
  counters.improved = static_cast<int>(
      std::count_if(loop_records.begin(), loop_records.end(), [](const FeedbackRecord& r) {
        return r.category == ResultCategory::improvement;
      }));

  // Feedback: ineffective ideas into the bank, improvements into the digest.
  for (auto& idea : ideas) {
    state_.ideas[idea.id] = idea;
  }
  update_bank(state_.bank, loop_records, state_.ideas, config.bank_policy);
  state_.feedback.insert(state_.feedback.end(), loop_records.begin(), loop_records.end());
  state_.digest = compose_digest(state_.feedback, state_.ideas);

  counters.cost_usd = gateway_.ledger_total().total_usd - cost_before;
  counters.check_consistent();
  state_.counters.push_back(counters);
  state_.ledger = gateway_.ledger_total();
  state_.replay_cursors = gateway_.replay_cursors();
  state_.loops_completed = loop_index;
}

void Orchestrator::write_outputs() {
  const std::filesystem::path dir(state_.config.state_dir);
  std::filesystem::create_directories(dir);
  persist_state(state_, state_file());
  const LoopReport report = make_report(state_);
  write_text_file_atomic(dir / "report.txt", report.render_text());
  write_text_file_atomic(dir / "report.json", canonical_json(report.to_json()));
}

LoopReport Orchestrator::run() {
  if (state_.config.n_loops == 0 && state_.loops_completed == 0) {
    return make_report(state_);  // nothing to do, and nothing written
  }
  std::filesystem::create_directories(state_.config.state_dir);
  while (state_.loops_completed < state_.config.n_loops) {
    try {
      run_one_loop();
    } catch (...) {
      // Persist the last consistent loop boundary; the partial loop is
      // discarded so a resume re-runs it cleanly.
      write_outputs();
      gateway_.save_recording();
      throw;
    }
    write_outputs();
  }
  gateway_.save_recording();
  write_outputs();
  return make_report(state_);
}

LoopReport resume_run(const std::filesystem::path& state_dir,
                      std::optional<int> n_loops_override) {
  LoopState state = load_state(state_dir / "state.json");
  if (n_loops_override) {
    state.config.n_loops = *n_loops_override;
  }
  Orchestrator orch(std::move(state));
  return orch.run();
}

}  // namespace labloop
