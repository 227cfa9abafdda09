#include "labloop/ideas.hpp"

#include <algorithm>

#include "labloop/errors.hpp"
#include "labloop/util.hpp"

namespace labloop {

std::string to_string(IdeaStatus status) {
  switch (status) {
    case IdeaStatus::generated: return "generated";
    case IdeaStatus::rejected_redundant: return "rejected_redundant";
    case IdeaStatus::rejected_not_novel: return "rejected_not_novel";
    case IdeaStatus::pending_experiment: return "pending_experiment";
    case IdeaStatus::executed_improved: return "executed_improved";
    case IdeaStatus::executed_maintained: return "executed_maintained";
    case IdeaStatus::executed_declined: return "executed_declined";
    case IdeaStatus::failed_execution: return "failed_execution";
  }
  return "generated";
}

IdeaStatus idea_status_from_string(const std::string& s) {
  for (auto status : {IdeaStatus::generated, IdeaStatus::rejected_redundant,
                      IdeaStatus::rejected_not_novel, IdeaStatus::pending_experiment,
                      IdeaStatus::executed_improved, IdeaStatus::executed_maintained,
                      IdeaStatus::executed_declined, IdeaStatus::failed_execution}) {
    if (to_string(status) == s) {
      return status;
    }
  }
  throw PreconditionError("unknown idea status: " + s);
}

void Idea::advance_status(IdeaStatus next) {
  bool legal = false;
  switch (status) {
    case IdeaStatus::generated:
      legal = next == IdeaStatus::rejected_redundant || next == IdeaStatus::rejected_not_novel ||
              next == IdeaStatus::pending_experiment;
      break;
    case IdeaStatus::pending_experiment:
      legal = next == IdeaStatus::executed_improved || next == IdeaStatus::executed_maintained ||
              next == IdeaStatus::executed_declined || next == IdeaStatus::failed_execution;
      break;
    default:
      legal = false;  // rejected_* and executed_*/failed are terminal
  }
  if (!legal) {
    throw PreconditionError("illegal idea status transition " + to_string(status) + " -> " +
                            to_string(next) + " for " + id);
  }
  status = next;
}

std::string to_string(BankReason reason) {
  return reason == BankReason::checked_independent ? "checked_independent"
                                                   : "ineffective_prior";
}

BankReason bank_reason_from_string(const std::string& s) {
  if (s == "checked_independent") return BankReason::checked_independent;
  if (s == "ineffective_prior") return BankReason::ineffective_prior;
  throw PreconditionError("unknown bank reason: " + s);
}

void IdeaBank::admit(const EmbeddingVector& embedding, const std::string& summary,
                     int source_loop, BankReason reason) {
  if (!embedding.valid()) {
    throw PreconditionError("bank: embedding must be finite with norm > 0");
  }
  if (!entries_.empty() && embedding.dim() != dim()) {
    throw DimensionError("bank: embedding dim " + std::to_string(embedding.dim()) +
                         " does not match bank dim " + std::to_string(dim()));
  }
  entries_.push_back({embedding, summary, source_loop, reason});
}

std::size_t IdeaBank::dim() const {
  return entries_.empty() ? 0 : entries_.front().embedding.dim();
}

nlohmann::json IdeaBank::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& entry : entries_) {
    arr.push_back({{"embedding", entry.embedding.values},
                   {"summary", entry.summary},
                   {"source_loop", entry.source_loop},
                   {"reason", to_string(entry.reason)}});
  }
  return arr;
}

IdeaBank IdeaBank::from_json(const nlohmann::json& doc) {
  IdeaBank bank;
  for (const auto& item : doc) {
    EmbeddingVector vec;
    vec.values = item.at("embedding").get<std::vector<double>>();
    bank.admit(vec, item.at("summary").get<std::string>(), item.at("source_loop").get<int>(),
               bank_reason_from_string(item.at("reason").get<std::string>()));
  }
  return bank;
}

std::vector<bool> independence_check(std::vector<Idea>& ideas, IdeaBank& bank, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw PreconditionError("independence_check: tau must be in (0, 1]");
  }
  for (const auto& idea : ideas) {
    if (!idea.embedding) {
      throw PreconditionError("independence_check: idea " + idea.id + " has no embedding");
    }
  }
  // The comparison set grows by every checked embedding, accepted or not, so
  // the accept decision is max-similarity < tau against a tau-independent
  // set: duplicates anywhere in the batch are caught and the accepted set is
  // monotone in tau. Only survivors are admitted to the bank itself.
  std::vector<EmbeddingVector> sweep;
  sweep.reserve(bank.size() + ideas.size());
  for (const auto& entry : bank.entries()) {
    sweep.push_back(entry.embedding);
  }
  std::vector<bool> accepted;
  accepted.reserve(ideas.size());
  for (auto& idea : ideas) {
    bool keep = true;
    if (!sweep.empty()) {
      double max_sim = -1.0;
      for (const EmbeddingVector& entry : sweep) {
        max_sim = std::max(max_sim, cosine_similarity(*idea.embedding, entry));
      }
      keep = max_sim < tau;
    }
    if (keep) {
      bank.admit(*idea.embedding, idea.summary, idea.loop_index,
                 BankReason::checked_independent);
    } else {
      idea.advance_status(IdeaStatus::rejected_redundant);
    }
    sweep.push_back(*idea.embedding);
    accepted.push_back(keep);
  }
  return accepted;
}

// ---------------------------------------------------------------------------
// IdeaEngine

IdeaEngine::IdeaEngine(Gateway& gateway, const PromptLibrary& prompts, ScholarClient& scholar,
                       int novelty_search_limit)
    : gateway_(gateway), prompts_(prompts), scholar_(scholar),
      novelty_search_limit_(novelty_search_limit) {}

namespace {

std::vector<Idea> parse_idea_blocks(const std::string& reply, int loop_index) {
  std::vector<Idea> ideas;
  nlohmann::json doc = extract_json_block(reply);
  if (!doc.is_array()) {
    return ideas;
  }
  for (const auto& item : doc) {
    if (!item.is_object()) {
      continue;
    }
    Idea idea;
    idea.title = trim(item.value("title", std::string()));
    idea.experiment_plan = trim(item.value("experiment_plan", std::string()));
    idea.summary = trim(item.value("summary", std::string()));
    idea.loop_index = loop_index;
    if (idea.title.empty() || idea.experiment_plan.empty() || idea.summary.empty()) {
      continue;  // malformed block: drop it, keep the rest of the batch
    }
    ideas.push_back(std::move(idea));
  }
  return ideas;
}

}  // namespace

GenerationResult IdeaEngine::generate_ideas(const GenerationContext& ctx, int loop_index) {
  if (trim(ctx.topic).empty()) {
    throw PreconditionError("generate_ideas: topic must be non-empty");
  }
  if (ctx.n_ideas < 1) {
    throw PreconditionError("generate_ideas: n_ideas must be >= 1");
  }

  std::string feedback_block;
  if (!trim(ctx.feedback_digest).empty()) {
    feedback_block = "Ideas that improved performance in earlier loops (build on these):\n" +
                     ctx.feedback_digest;
  } else {
    feedback_block = "(no experimental feedback available yet)";
  }
  const std::string prompt =
      prompts_.render("idea_generation", {{"topic", ctx.topic},
                                          {"n_ideas", std::to_string(ctx.n_ideas)},
                                          {"references", format_references(ctx.references)},
                                          {"feedback", feedback_block}});

  std::vector<Idea> best;
  const int max_asks = 3;  // first ask + 2 re-asks
  for (int attempt = 0; attempt < max_asks; ++attempt) {
    ChatRequest req;
    req.tag = "idea_generation";
    req.messages = {{Role::user, prompt}};
    if (attempt > 0) {
      req.messages.push_back(
          {Role::user, "Your previous reply did not contain " + std::to_string(ctx.n_ideas) +
                           " well-formed idea objects. Reply again with a JSON array of " +
                           std::to_string(ctx.n_ideas) +
                           " objects, each with non-empty title, experiment_plan, summary."});
    }
    auto resp = gateway_.chat(req);
    auto parsed = parse_idea_blocks(resp.content, loop_index);
    if (parsed.size() > best.size()) {
      best = std::move(parsed);
    }
    if (static_cast<int>(best.size()) >= ctx.n_ideas) {
      best.resize(ctx.n_ideas);
      break;
    }
  }
  if (best.empty()) {
    throw ModelReplyError("idea generation produced zero parseable ideas after re-asks");
  }
  for (std::size_t j = 0; j < best.size(); ++j) {
    best[j].id = "loop" + std::to_string(loop_index) + "-idea" + std::to_string(j + 1);
  }
  GenerationResult result;
  result.ideas = std::move(best);
  if (static_cast<int>(result.ideas.size()) < ctx.n_ideas) {
    result.warning = "parsed only " + std::to_string(result.ideas.size()) + " of " +
                     std::to_string(ctx.n_ideas) + " requested ideas";
  }
  return result;
}

bool IdeaEngine::novelty_check(Idea& idea) {
  if (idea.status != IdeaStatus::generated) {
    throw PreconditionError("novelty_check: idea " + idea.id +
                            " must have survived the independence check (status generated)");
  }

  std::vector<PaperRecord> related;
  try {
    related = scholar_.search(idea.title, novelty_search_limit_);
  } catch (const Error&) {
    // A failed novelty search must not kill the idea pipeline; judge on the
    // summary alone.
  }

  std::string results_block = format_references(related);
  const std::string prompt = prompts_.render(
      "novelty_check",
      {{"title", idea.title}, {"summary", idea.summary}, {"search_results", results_block}});

  std::optional<bool> verdict;
  for (int attempt = 0; attempt < 2 && !verdict; ++attempt) {
    ChatRequest req;
    req.tag = "novelty_check";
    req.temperature = 0.0;
    req.messages = {{Role::user, prompt}};
    if (attempt > 0) {
      req.messages.push_back({Role::user,
                              "Your previous reply did not contain a verdict. Reply with "
                              "exactly NOVEL or NOT NOVEL."});
    }
    auto resp = gateway_.chat(req);
    const std::string upper = [&] {
      std::string u = resp.content;
      std::transform(u.begin(), u.end(), u.begin(), ::toupper);
      return u;
    }();
    // Check the negative form first: "NOT NOVEL" contains "NOVEL".
    if (upper.find("NOT NOVEL") != std::string::npos ||
        upper.find("NOT-NOVEL") != std::string::npos) {
      verdict = false;
    } else if (upper.find("NOVEL") != std::string::npos) {
      verdict = true;
    }
  }
  // Conservative: an unreadable verdict rejects the idea.
  bool novel = verdict.value_or(false);
  if (!novel) {
    idea.advance_status(IdeaStatus::rejected_not_novel);
  }
  return novel;
}

}  // namespace labloop
