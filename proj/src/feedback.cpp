#include "labloop/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "labloop/errors.hpp"

namespace labloop {

std::string to_string(ResultCategory category) {
  switch (category) {
    case ResultCategory::improvement: return "improvement";
    case ResultCategory::maintenance: return "maintenance";
    case ResultCategory::decline: return "decline";
  }
  return "maintenance";
}

ResultCategory result_category_from_string(const std::string& s) {
  if (s == "improvement") return ResultCategory::improvement;
  if (s == "maintenance") return ResultCategory::maintenance;
  if (s == "decline") return ResultCategory::decline;
  throw PreconditionError("unknown result category: " + s);
}

ResultCategory categorize(double baseline, double achieved, double epsilon,
                          bool higher_is_better) {
  if (!std::isfinite(baseline) || !std::isfinite(achieved)) {
    throw PreconditionError("categorize: metrics must be finite");
  }
  if (epsilon < 0.0 || !std::isfinite(epsilon)) {
    throw PreconditionError("categorize: epsilon must be a nonnegative finite value");
  }
  const double gain = higher_is_better ? achieved - baseline : baseline - achieved;
  if (gain > epsilon) {
    return ResultCategory::improvement;
  }
  if (-gain > epsilon) {
    return ResultCategory::decline;
  }
  return ResultCategory::maintenance;
}

FeedbackRecord make_feedback_record(const std::string& idea_id, double baseline,
                                    double achieved, double epsilon, int loop_index,
                                    bool higher_is_better) {
  FeedbackRecord record;
  record.idea_id = idea_id;
  record.baseline_metric = baseline;
  record.achieved_metric = achieved;
  record.category = categorize(baseline, achieved, epsilon, higher_is_better);
  record.loop_index = loop_index;
  return record;
}

namespace {

IdeaStatus executed_status(ResultCategory category) {
  switch (category) {
    case ResultCategory::improvement: return IdeaStatus::executed_improved;
    case ResultCategory::maintenance: return IdeaStatus::executed_maintained;
    case ResultCategory::decline: return IdeaStatus::executed_declined;
  }
  return IdeaStatus::executed_maintained;
}

std::string format_delta(double delta) {
  std::ostringstream out;
  if (delta >= 0.0) {
    out << "+";
  }
  out << delta;
  return out.str();
}

}  // namespace

std::string to_string(BankPolicy policy) {
  return policy == BankPolicy::ineffective_priors ? "ineffective_priors"
                                                  : "maintained_or_improved";
}

BankPolicy bank_policy_from_string(const std::string& s) {
  if (s == "ineffective_priors") return BankPolicy::ineffective_priors;
  if (s == "maintained_or_improved") return BankPolicy::maintained_or_improved;
  throw PreconditionError("unknown bank policy: " + s);
}

void update_bank(IdeaBank& bank, const std::vector<FeedbackRecord>& records,
                 std::map<std::string, Idea>& ideas, BankPolicy policy) {
  for (const auto& record : records) {
    auto it = ideas.find(record.idea_id);
    if (it == ideas.end()) {
      throw PreconditionError("update_bank: unknown idea " + record.idea_id);
    }
    Idea& idea = it->second;
    if (!idea.embedding) {
      throw PreconditionError("update_bank: idea " + record.idea_id + " has no embedding");
    }
    if (idea.status == IdeaStatus::pending_experiment) {
      idea.advance_status(executed_status(record.category));
    }
    const bool store =
        policy == BankPolicy::ineffective_priors
            ? record.category != ResultCategory::improvement
            : record.category != ResultCategory::decline;
    if (store) {
      bank.admit(*idea.embedding, idea.summary, record.loop_index,
                 BankReason::ineffective_prior);
    }
  }
}

std::string compose_digest(const std::vector<FeedbackRecord>& records,
                           const std::map<std::string, Idea>& ideas) {
  std::vector<const FeedbackRecord*> improvements;
  for (const auto& record : records) {
    if (record.category == ResultCategory::improvement) {
      improvements.push_back(&record);
    }
  }
  std::stable_sort(improvements.begin(), improvements.end(),
                   [](const FeedbackRecord* a, const FeedbackRecord* b) {
                     return (a->achieved_metric - a->baseline_metric) >
                            (b->achieved_metric - b->baseline_metric);
                   });
  std::string digest;
  for (const FeedbackRecord* record : improvements) {
    auto it = ideas.find(record->idea_id);
    if (it == ideas.end()) {
      throw PreconditionError("compose_digest: unknown idea " + record->idea_id);
    }
    const Idea& idea = it->second;
    digest += "- " + idea.title + " (" +
              format_delta(record->achieved_metric - record->baseline_metric) + "): " +
              idea.summary + "\n";
  }
  return digest;
}

}  // namespace labloop
