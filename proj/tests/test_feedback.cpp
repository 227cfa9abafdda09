#include <doctest.h>

#include <random>

#include "labloop/errors.hpp"
#include "labloop/feedback.hpp"

using namespace labloop;

namespace {

Idea executed_idea(const std::string& id, std::vector<double> embedding) {
  Idea idea;
  idea.id = id;
  idea.title = "title " + id;
  idea.experiment_plan = "plan";
  idea.summary = "summary " + id;
  idea.embedding = EmbeddingVector{std::move(embedding)};
  idea.loop_index = 1;
  idea.status = IdeaStatus::generated;
  idea.advance_status(IdeaStatus::pending_experiment);
  return idea;
}

}  // namespace

TEST_CASE("categorize: paper-shaped and hand-evaluated cases") {
  CHECK(categorize(91.0, 93.9, 0.0) == ResultCategory::improvement);
  CHECK(categorize(80.0, 80.0, 0.0) == ResultCategory::maintenance);
  CHECK(categorize(81.2, 81.15, 0.1) == ResultCategory::maintenance);
  CHECK(categorize(81.2, 81.15, 0.01) == ResultCategory::decline);

  // Lower-is-better metrics flip the comparison.
  CHECK(categorize(0.35, 0.20, 0.0, false) == ResultCategory::improvement);
  CHECK(categorize(0.35, 0.50, 0.0, false) == ResultCategory::decline);

  CHECK_THROWS_AS(categorize(std::nan(""), 1.0, 0.0), PreconditionError);
  CHECK_THROWS_AS(categorize(1.0, 1.0, -0.5), PreconditionError);
}

TEST_CASE("categorize is exhaustive, exclusive, and antisymmetric") {
  std::mt19937 rng(73);
  std::uniform_real_distribution<double> metric_dist(-100.0, 100.0);
  std::uniform_real_distribution<double> eps_dist(0.0, 5.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double baseline = metric_dist(rng);
    const double achieved = metric_dist(rng);
    const double epsilon = eps_dist(rng);
    const auto forward = categorize(baseline, achieved, epsilon);
    const auto swapped = categorize(achieved, baseline, epsilon);
    switch (forward) {
      case ResultCategory::improvement:
        CHECK(swapped == ResultCategory::decline);
        break;
      case ResultCategory::decline:
        CHECK(swapped == ResultCategory::improvement);
        break;
      case ResultCategory::maintenance:
        CHECK(swapped == ResultCategory::maintenance);
        break;
    }
  }
}

TEST_CASE("update_bank pushes exactly the ineffective ideas") {
  IdeaBank bank;
  std::map<std::string, Idea> ideas;
  ideas["a"] = executed_idea("a", {1.0, 0.0, 0.0});
  ideas["b"] = executed_idea("b", {0.0, 1.0, 0.0});
  ideas["c"] = executed_idea("c", {0.0, 0.0, 1.0});

  std::vector<FeedbackRecord> records = {
      make_feedback_record("a", 80.0, 82.9, 0.0, 1),
      make_feedback_record("b", 80.0, 80.0, 0.0, 1),
      make_feedback_record("c", 80.0, 79.0, 0.0, 1),
  };
  update_bank(bank, records, ideas);

  CHECK(bank.size() == 2);  // b and c, not the improvement
  CHECK(bank.entries()[0].reason == BankReason::ineffective_prior);
  CHECK(bank.entries()[0].summary == "summary b");
  CHECK(bank.entries()[1].summary == "summary c");
  CHECK(ideas["a"].status == IdeaStatus::executed_improved);
  CHECK(ideas["b"].status == IdeaStatus::executed_maintained);
  CHECK(ideas["c"].status == IdeaStatus::executed_declined);
}

TEST_CASE("update_bank leaves the bank alone without ineffective records") {
  IdeaBank bank;
  std::map<std::string, Idea> ideas;
  ideas["a"] = executed_idea("a", {1.0, 0.0});
  std::vector<FeedbackRecord> records = {make_feedback_record("a", 80.0, 81.0, 0.0, 1)};
  update_bank(bank, records, ideas);
  CHECK(bank.empty());

  update_bank(bank, {}, ideas);
  CHECK(bank.empty());

  std::map<std::string, Idea> missing_embedding;
  missing_embedding["x"] = executed_idea("x", {1.0, 0.0});
  missing_embedding["x"].embedding.reset();
  std::vector<FeedbackRecord> bad = {make_feedback_record("x", 80.0, 79.0, 0.0, 1)};
  CHECK_THROWS_AS(update_bank(bank, bad, missing_embedding), PreconditionError);
}

TEST_CASE("compose_digest lists improvements by descending delta") {
  std::map<std::string, Idea> ideas;
  ideas["a"] = executed_idea("a", {1.0, 0.0});
  ideas["b"] = executed_idea("b", {0.0, 1.0});
  ideas["c"] = executed_idea("c", {1.0, 1.0});

  std::vector<FeedbackRecord> records = {
      make_feedback_record("a", 80.0, 80.8, 0.0, 1),   // +0.8
      make_feedback_record("b", 80.0, 81.5, 0.0, 1),   // +1.5
      make_feedback_record("c", 80.0, 78.0, 0.0, 1),   // decline, excluded
  };
  auto digest = compose_digest(records, ideas);
  CHECK(digest.find("title b") != std::string::npos);
  CHECK(digest.find("+1.5") != std::string::npos);
  CHECK(digest.find("+0.8") != std::string::npos);
  CHECK(digest.find("title b") < digest.find("title a"));
  CHECK(digest.find("title c") == std::string::npos);

  CHECK(compose_digest({}, ideas).empty());
  std::vector<FeedbackRecord> only_bad = {make_feedback_record("c", 80.0, 78.0, 0.0, 1)};
  CHECK(compose_digest(only_bad, ideas).empty());
}

TEST_CASE("digest membership equals the improvement set exactly") {
  std::mt19937 rng(79);
  std::uniform_real_distribution<double> metric_dist(70.0, 90.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, Idea> ideas;
    std::vector<FeedbackRecord> records;
    for (int i = 0; i < 8; ++i) {
      const std::string id = "idea" + std::to_string(i);
      ideas[id] = executed_idea(id, {1.0 + i, 0.5});
      records.push_back(make_feedback_record(id, 80.0, metric_dist(rng), 0.0, 1));
    }
    auto digest = compose_digest(records, ideas);
    for (const auto& record : records) {
      const bool listed = digest.find("title " + record.idea_id) != std::string::npos;
      CHECK(listed == (record.category == ResultCategory::improvement));
    }
  }
}
