#pragma once

#include <map>
#include <string>
#include <vector>

#include "labloop/ideas.hpp"

namespace labloop {

enum class ResultCategory { improvement, maintenance, decline };

std::string to_string(ResultCategory category);
ResultCategory result_category_from_string(const std::string& s);

struct FeedbackRecord {
  std::string idea_id;
  double baseline_metric = 0.0;
  double achieved_metric = 0.0;
  ResultCategory category = ResultCategory::maintenance;
  int loop_index = 0;
};

// improvement iff achieved beats baseline by more than epsilon; decline iff
// it trails by more than epsilon; maintenance otherwise. With
// higher_is_better false the comparison flips.
ResultCategory categorize(double baseline, double achieved, double epsilon,
                          bool higher_is_better = true);

FeedbackRecord make_feedback_record(const std::string& idea_id, double baseline,
                                    double achieved, double epsilon, int loop_index,
                                    bool higher_is_better = true);

// Which executed ideas seed the next loops' bank. The default pushes the
// ineffective ones (maintenance + decline) so their lookalikes get filtered;
// the alternative stores maintained-or-improved ideas instead.
enum class BankPolicy { ineffective_priors, maintained_or_improved };

std::string to_string(BankPolicy policy);
BankPolicy bank_policy_from_string(const std::string& s);

// Pushes the selected ideas' embeddings into the bank (reason
// ineffective_prior) and advances every recorded idea to its executed_*
// status. Under the default policy improvement ideas stay out of the bank;
// they feed the digest instead.
void update_bank(IdeaBank& bank, const std::vector<FeedbackRecord>& records,
                 std::map<std::string, Idea>& ideas,
                 BankPolicy policy = BankPolicy::ineffective_priors);

// Text block listing each improvement idea (title, summary, signed delta),
// best delta first; empty when nothing improved.
std::string compose_digest(const std::vector<FeedbackRecord>& records,
                           const std::map<std::string, Idea>& ideas);

}  // namespace labloop
