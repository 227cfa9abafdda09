#include <doctest.h>

#include <random>

#include "labloop/errors.hpp"
#include "labloop/ideas.hpp"
#include "test_support.hpp"

using namespace labloop;
using test::chat_entry;

namespace {

EmbeddingVector vec(std::vector<double> values) { return {std::move(values)}; }

Idea idea_with_embedding(const std::string& id, EmbeddingVector embedding, int loop = 1) {
  Idea idea;
  idea.id = id;
  idea.title = "title " + id;
  idea.experiment_plan = "plan " + id;
  idea.summary = "summary " + id;
  idea.embedding = std::move(embedding);
  idea.loop_index = loop;
  return idea;
}

EmbeddingVector random_unit(std::mt19937& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  EmbeddingVector v;
  v.values.resize(dim);
  do {
    for (auto& x : v.values) {
      x = normal(rng);
    }
  } while (v.norm() < 1e-6);
  return v;
}

}  // namespace

TEST_CASE("cosine similarity: identity, orthogonality, and a hand-computed value") {
  CHECK(cosine_similarity(vec({3.0, 4.0}), vec({3.0, 4.0})) == doctest::Approx(1.0));
  CHECK(cosine_similarity(vec({1.0, 0.0}), vec({0.0, 1.0})) == doctest::Approx(0.0));
  // dot = 2+2+4 = 8, |a| = |b| = 3, so 8/9.
  CHECK(cosine_similarity(vec({1.0, 2.0, 2.0}), vec({2.0, 1.0, 2.0})) ==
        doctest::Approx(8.0 / 9.0).epsilon(1e-12));

  CHECK_THROWS_AS(cosine_similarity(vec({1.0}), vec({1.0, 2.0})), DimensionError);
  CHECK_THROWS_AS(cosine_similarity(vec({0.0, 0.0}), vec({1.0, 0.0})), PreconditionError);
}

TEST_CASE("cosine similarity is symmetric, scale-invariant, and clamped") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> scale_dist(0.1, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = random_unit(rng, 6);
    auto b = random_unit(rng, 6);
    const double ab = cosine_similarity(a, b);
    CHECK(ab == doctest::Approx(cosine_similarity(b, a)).epsilon(1e-12));
    CHECK(ab >= -1.0);
    CHECK(ab <= 1.0);

    EmbeddingVector scaled = a;
    const double k = scale_dist(rng);
    for (auto& x : scaled.values) {
      x *= k;
    }
    CHECK(cosine_similarity(scaled, b) == doctest::Approx(ab).epsilon(1e-9));
  }
}

TEST_CASE("bank admits append-only with reason and loop bookkeeping") {
  IdeaBank bank;
  CHECK(bank.empty());
  bank.admit(vec({1.0, 0.0}), "first", 1, BankReason::checked_independent);
  CHECK(bank.size() == 1);
  bank.admit(vec({1.0, 0.0}), "first again", 2, BankReason::ineffective_prior);
  CHECK(bank.size() == 2);  // dedup is the checker's job
  CHECK(bank.entries()[1].source_loop == 2);
  CHECK(bank.entries()[1].reason == BankReason::ineffective_prior);

  CHECK_THROWS_AS(bank.admit(vec({1.0, 0.0, 0.0}), "odd dim", 2,
                             BankReason::checked_independent),
                  DimensionError);
  CHECK_THROWS_AS(bank.admit(vec({0.0, 0.0}), "zero", 2, BankReason::checked_independent),
                  PreconditionError);
}

TEST_CASE("independence check: empty bank accepts the first idea") {
  IdeaBank bank;
  std::vector<Idea> ideas = {idea_with_embedding("a", vec({1.0, 0.0}))};
  auto accepted = independence_check(ideas, bank, 0.8);
  REQUIRE(accepted.size() == 1);
  CHECK(accepted[0]);
  CHECK(bank.size() == 1);
}

TEST_CASE("independence check catches within-batch duplicates via sweep-append") {
  IdeaBank bank;
  std::vector<Idea> ideas = {idea_with_embedding("a", vec({1.0, 0.0})),
                             idea_with_embedding("b", vec({1.0, 0.0}))};
  auto accepted = independence_check(ideas, bank, 0.8);
  REQUIRE(accepted.size() == 2);
  CHECK(accepted[0]);
  CHECK_FALSE(accepted[1]);
  CHECK(ideas[0].status == IdeaStatus::generated);
  CHECK(ideas[1].status == IdeaStatus::rejected_redundant);
}

TEST_CASE("independence check accepts pairwise-orthogonal ideas") {
  IdeaBank bank;
  std::vector<Idea> ideas = {idea_with_embedding("a", vec({1.0, 0.0, 0.0})),
                             idea_with_embedding("b", vec({0.0, 1.0, 0.0})),
                             idea_with_embedding("c", vec({0.0, 0.0, 1.0}))};
  auto accepted = independence_check(ideas, bank, 0.8);
  CHECK(accepted == std::vector<bool>{true, true, true});
  CHECK(bank.size() == 3);
}

TEST_CASE("independence check rejects at similarity exactly tau") {
  IdeaBank bank;
  bank.admit(vec({1.0, 0.0}), "prior", 0, BankReason::ineffective_prior);
  // Identical vector: similarity 1.0, tau 1.0 -> rejected (accept iff < tau).
  std::vector<Idea> ideas = {idea_with_embedding("dup", vec({2.0, 0.0}))};
  auto accepted = independence_check(ideas, bank, 1.0);
  CHECK_FALSE(accepted[0]);
}

TEST_CASE("independence check properties on random instances") {
  std::mt19937 rng(23);
  std::uniform_int_distribution<int> n_dist(0, 12);
  std::uniform_real_distribution<double> tau_dist(0.05, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = n_dist(rng);
    std::vector<Idea> ideas;
    for (int i = 0; i < n; ++i) {
      ideas.push_back(idea_with_embedding("i" + std::to_string(i), random_unit(rng, 5)));
    }
    const double tau = tau_dist(rng);

    auto ideas_copy = ideas;
    IdeaBank bank;
    auto accepted = independence_check(ideas_copy, bank, tau);
    CHECK(accepted.size() == ideas.size());  // len(R) == len(I)

    // Monotonicity: a lower threshold never accepts more.
    const double lower = tau * 0.5;
    auto ideas_low = ideas;
    IdeaBank bank_low;
    auto accepted_low = independence_check(ideas_low, bank_low, lower);
    for (std::size_t i = 0; i < accepted.size(); ++i) {
      if (accepted_low[i]) {
        CHECK(accepted[i]);
      }
    }

    // A duplicate of any accepted idea appended to the batch is rejected.
    if (!ideas.empty() && accepted[0]) {
      auto with_dup = ideas;
      with_dup.push_back(idea_with_embedding("dup", *ideas[0].embedding));
      IdeaBank bank_dup;
      auto accepted_dup = independence_check(with_dup, bank_dup, tau);
      CHECK_FALSE(accepted_dup.back());
    }
  }
}

TEST_CASE("bank order does not change accept/reject decisions") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EmbeddingVector> entries;
    for (int i = 0; i < 6; ++i) {
      entries.push_back(random_unit(rng, 4));
    }
    std::vector<Idea> probe = {idea_with_embedding("p", random_unit(rng, 4))};

    IdeaBank forward;
    IdeaBank reversed;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      forward.admit(entries[i], "e", 0, BankReason::ineffective_prior);
      reversed.admit(entries[entries.size() - 1 - i], "e", 0,
                     BankReason::ineffective_prior);
    }
    auto probe_a = probe;
    auto probe_b = probe;
    CHECK(independence_check(probe_a, forward, 0.8) ==
          independence_check(probe_b, reversed, 0.8));
  }
}

TEST_CASE("independence check preconditions") {
  IdeaBank bank;
  std::vector<Idea> no_embedding = {Idea{"x", "t", "p", "s", std::nullopt,
                                         IdeaStatus::generated, 1}};
  CHECK_THROWS_AS(independence_check(no_embedding, bank, 0.8), PreconditionError);
  std::vector<Idea> ok = {idea_with_embedding("a", vec({1.0, 0.0}))};
  CHECK_THROWS_AS(independence_check(ok, bank, 0.0), PreconditionError);
  CHECK_THROWS_AS(independence_check(ok, bank, 1.5), PreconditionError);
}

// ---------------------------------------------------------------------------
// Generation and novelty

namespace {

std::string idea_json_array(int count, const std::string& prefix = "Idea") {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 1; i <= count; ++i) {
    arr.push_back({{"title", prefix + " " + std::to_string(i)},
                   {"experiment_plan", "edit the model and rerun"},
                   {"summary", prefix + " summary " + std::to_string(i)}});
  }
  return arr.dump();
}

struct EngineHarness {
  test::TempDir dir;
  std::unique_ptr<Gateway> gateway;
  PromptLibrary prompts = PromptLibrary::builtin();
  ScholarConfig scholar_config;
  std::unique_ptr<ScholarClient> scholar;
  std::unique_ptr<IdeaEngine> engine;

  explicit EngineHarness(std::vector<OracleScript::Entry> entries) {
    auto path = test::write_script(dir, std::move(entries));
    gateway = std::make_unique<Gateway>(test::replay_config(path));
    scholar_config.fixture_path = (test::fixtures_dir() / "papers_search.json").string();
    scholar = std::make_unique<ScholarClient>(scholar_config);
    engine = std::make_unique<IdeaEngine>(*gateway, prompts, *scholar, 5);
  }
};

}  // namespace

TEST_CASE("generate_ideas parses a full batch of 20") {
  EngineHarness h({chat_entry("idea_generation", idea_json_array(20))});
  GenerationContext ctx;
  ctx.topic = "3D classification";
  ctx.n_ideas = 20;
  auto result = h.engine->generate_ideas(ctx, 1);
  REQUIRE(result.ideas.size() == 20);
  CHECK_FALSE(result.warning.has_value());
  CHECK(result.ideas.front().id == "loop1-idea1");
  CHECK(result.ideas.back().id == "loop1-idea20");
  for (const auto& idea : result.ideas) {
    CHECK_FALSE(idea.title.empty());
    CHECK_FALSE(idea.experiment_plan.empty());
    CHECK_FALSE(idea.summary.empty());
    CHECK(idea.status == IdeaStatus::generated);
    CHECK(idea.loop_index == 1);
  }
}

TEST_CASE("generate_ideas drops malformed blocks and warns after re-asks") {
  // 19 good blocks plus one with an empty summary, repeated for every re-ask.
  nlohmann::json arr = nlohmann::json::parse(idea_json_array(19));
  arr.push_back({{"title", "broken"}, {"experiment_plan", "x"}, {"summary", ""}});
  const std::string reply = arr.dump();
  EngineHarness h({chat_entry("idea_generation", reply),
                   chat_entry("idea_generation", reply),
                   chat_entry("idea_generation", reply)});
  GenerationContext ctx;
  ctx.topic = "t";
  ctx.n_ideas = 20;
  auto result = h.engine->generate_ideas(ctx, 2);
  CHECK(result.ideas.size() == 19);
  REQUIRE(result.warning.has_value());
  CHECK(result.warning->find("19") != std::string::npos);
}

TEST_CASE("generate_ideas minimal single idea") {
  EngineHarness h({chat_entry("idea_generation", idea_json_array(1))});
  GenerationContext ctx;
  ctx.topic = "t";
  ctx.n_ideas = 1;
  auto result = h.engine->generate_ideas(ctx, 1);
  REQUIRE(result.ideas.size() == 1);
  CHECK(result.ideas[0].id == "loop1-idea1");
}

TEST_CASE("generate_ideas fails only when nothing parses") {
  EngineHarness h({chat_entry("idea_generation", "I have no ideas today."),
                   chat_entry("idea_generation", "still nothing"),
                   chat_entry("idea_generation", "sorry")});
  GenerationContext ctx;
  ctx.topic = "t";
  ctx.n_ideas = 3;
  CHECK_THROWS_AS(h.engine->generate_ideas(ctx, 1), ModelReplyError);
}

TEST_CASE("novelty check parses verdicts and is conservative on garbage") {
  SUBCASE("NOVEL accepts") {
    EngineHarness h({chat_entry("novelty_check", "NOVEL - nothing similar found")});
    auto idea = idea_with_embedding("a", vec({1.0, 0.0}));
    CHECK(h.engine->novelty_check(idea));
    CHECK(idea.status == IdeaStatus::generated);
  }
  SUBCASE("NOT NOVEL rejects") {
    EngineHarness h({chat_entry("novelty_check", "NOT NOVEL, matches paper 2")});
    auto idea = idea_with_embedding("a", vec({1.0, 0.0}));
    CHECK_FALSE(h.engine->novelty_check(idea));
    CHECK(idea.status == IdeaStatus::rejected_not_novel);
  }
  SUBCASE("garbage twice rejects") {
    EngineHarness h({chat_entry("novelty_check", "hmm"),
                     chat_entry("novelty_check", "unclear")});
    auto idea = idea_with_embedding("a", vec({1.0, 0.0}));
    CHECK_FALSE(h.engine->novelty_check(idea));
    CHECK(idea.status == IdeaStatus::rejected_not_novel);
  }
}

TEST_CASE("idea status transitions only move forward") {
  Idea idea = idea_with_embedding("a", vec({1.0, 0.0}));
  idea.advance_status(IdeaStatus::pending_experiment);
  idea.advance_status(IdeaStatus::executed_improved);
  CHECK_THROWS_AS(idea.advance_status(IdeaStatus::executed_declined), PreconditionError);

  Idea rejected = idea_with_embedding("b", vec({1.0, 0.0}));
  rejected.advance_status(IdeaStatus::rejected_redundant);
  CHECK_THROWS_AS(rejected.advance_status(IdeaStatus::pending_experiment), PreconditionError);

  Idea fresh = idea_with_embedding("c", vec({1.0, 0.0}));
  CHECK_THROWS_AS(fresh.advance_status(IdeaStatus::executed_improved), PreconditionError);
}
