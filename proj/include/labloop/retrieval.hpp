#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "labloop/gateway.hpp"
#include "labloop/prompts.hpp"

namespace labloop {

struct PaperRecord {
  std::string external_id;
  std::string title;
  std::string abstract;  // may be empty; many records ship without one
  std::optional<int> year;
  std::optional<int> score;  // 1..10 once assigned
  bool score_flagged = false;  // score was forced to 1 after unparseable replies
};

struct TaskAttributes {
  std::string topic;
  std::string model_inputs;
  std::string model_outputs;
  std::string other_characteristics;
};

struct ScholarConfig {
  // Base URL of the scholarly search service; the client appends
  // /graph/v1/paper/search?query=...&limit=...&fields=title,abstract,year
  std::string endpoint = "https://api.semanticscholar.org";
  // When set, search responses are read from this JSON file instead of the
  // network (same payload shape). Keeps runs and tests fully offline.
  std::string fixture_path;
  std::string api_key_env = "SCHOLAR_API_KEY";
  int max_retries = 3;
  double retry_initial_delay_s = 0.5;
  int http_timeout_s = 60;
};

// Scholarly search client. Results are cached per (query, limit) for the
// lifetime of the client, so re-running retrieval every loop does not repeat
// identical API calls.
class ScholarClient {
 public:
  explicit ScholarClient(ScholarConfig config);

  // At most `limit` records, deduplicated by external id, order preserved.
  // Zero results is an empty list, not an error.
  std::vector<PaperRecord> search(const std::string& query, int limit);

 private:
  ScholarConfig config_;
  std::mutex mutex_;
  std::map<std::pair<std::string, int>, std::vector<PaperRecord>> cache_;

  std::vector<PaperRecord> fetch(const std::string& query, int limit);
};

// Parse one scholarly search payload ({"data":[...]}) into records:
// dedup by id, missing abstracts kept as empty strings, capped at `limit`.
std::vector<PaperRecord> parse_search_payload(const nlohmann::json& doc, int limit);

// Task-attribute extraction and attribute-guided 1-10 scoring.
class PaperRanker {
 public:
  PaperRanker(Gateway& gateway, const PromptLibrary& prompts);

  TaskAttributes extract_task_attributes(const std::string& topic);

  // Attaches an integer score in [1,10] to every record, in input order.
  // Out-of-range or non-integer replies get one re-ask, then clamp; replies
  // that never parse leave score 1 with score_flagged set.
  void score_papers(std::vector<PaperRecord>& papers, const TaskAttributes& attrs);

 private:
  Gateway& gateway_;
  const PromptLibrary& prompts_;

  std::optional<int> ask_score(const PaperRecord& paper, const TaskAttributes& attrs,
                               const std::string& extra_instruction);
};

// Papers with score >= min_score, original order preserved. Every paper must
// already be scored.
std::vector<PaperRecord> filter_by_score(const std::vector<PaperRecord>& papers,
                                         int min_score = 8);

// Case-insensitive substring counts per keyword over title+abstract text.
std::map<std::string, long> keyword_frequency(const std::vector<PaperRecord>& papers,
                                              const std::vector<std::string>& keywords);

// "Title — abstract" reference block fed to idea generation.
std::string format_references(const std::vector<PaperRecord>& papers);

}  // namespace labloop
