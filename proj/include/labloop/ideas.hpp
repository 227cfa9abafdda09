#pragma once

#include <optional>
#include <string>
#include <vector>

#include "labloop/gateway.hpp"
#include "labloop/prompts.hpp"
#include "labloop/retrieval.hpp"

namespace labloop {

enum class IdeaStatus {
  generated,
  rejected_redundant,
  rejected_not_novel,
  pending_experiment,
  executed_improved,
  executed_maintained,
  executed_declined,
  failed_execution,
};

std::string to_string(IdeaStatus status);
IdeaStatus idea_status_from_string(const std::string& s);

struct Idea {
  std::string id;  // "loop<k>-idea<j>", stable across state files
  std::string title;
  std::string experiment_plan;
  std::string summary;
  std::optional<EmbeddingVector> embedding;
  IdeaStatus status = IdeaStatus::generated;
  int loop_index = 0;

  // Statuses only move forward: generated -> rejected_*/pending_experiment
  // -> executed_*/failed_execution. Throws on an illegal move.
  void advance_status(IdeaStatus next);
};

enum class BankReason { checked_independent, ineffective_prior };

std::string to_string(BankReason reason);
BankReason bank_reason_from_string(const std::string& s);

struct BankEntry {
  EmbeddingVector embedding;
  std::string summary;
  int source_loop = 0;
  BankReason reason = BankReason::checked_independent;
};

// Append-only store of summary embeddings used to reject redundant ideas.
// Deduplication is the checker's job, not the bank's.
class IdeaBank {
 public:
  void admit(const EmbeddingVector& embedding, const std::string& summary, int source_loop,
             BankReason reason);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<BankEntry>& entries() const { return entries_; }
  std::size_t dim() const;  // 0 when empty

  nlohmann::json to_json() const;
  static IdeaBank from_json(const nlohmann::json& doc);

 private:
  std::vector<BankEntry> entries_;
};

struct GenerationContext {
  std::string topic;
  std::vector<PaperRecord> references;  // title+abstract only, already filtered
  std::string feedback_digest;          // empty in loop 1
  int n_ideas = 20;
};

struct GenerationResult {
  std::vector<Idea> ideas;
  // Set when re-asks were exhausted and fewer than n_ideas parsed.
  std::optional<std::string> warning;
};

// Sequential sweep: idea i is accepted iff its max cosine similarity against
// the bank plus every previously checked idea in the batch is < tau, so
// within-batch near-duplicates are caught and the accepted set is monotone
// in tau. Accepted embeddings are admitted to the bank; rejected ideas move
// to rejected_redundant. Output length always equals input length.
std::vector<bool> independence_check(std::vector<Idea>& ideas, IdeaBank& bank,
                                     double tau = 0.8);

class IdeaEngine {
 public:
  IdeaEngine(Gateway& gateway, const PromptLibrary& prompts, ScholarClient& scholar,
             int novelty_search_limit = 10);

  // Parses ideas out of a structured model reply; malformed blocks are
  // dropped individually, with up to 2 re-asks before settling for fewer.
  GenerationResult generate_ideas(const GenerationContext& ctx, int loop_index);

  // Searches for related papers, asks for a NOVEL / NOT NOVEL verdict, and
  // moves rejected ideas to rejected_not_novel. Unparseable verdicts count
  // as not novel after one re-ask.
  bool novelty_check(Idea& idea);

 private:
  Gateway& gateway_;
  const PromptLibrary& prompts_;
  ScholarClient& scholar_;
  int novelty_search_limit_;
};

}  // namespace labloop
