#include <gtest/gtest.h>

#include "cicrl/coherence.hpp"

using namespace cicrl;

namespace {

const Lexicon& lexicon() {
  static const Lexicon lex = Lexicon::load(std::string(CICRL_ASSET_DIR) + "/lexicon.json");
  return lex;
}

ColorContext sample_context(std::uint64_t seed, Condition c = Condition::Split) {
  Rng rng(seed);
  return generate_context(c, rng);
}

void expect_dist_near(const Dist3& a, const Dist3& b, double tol) {
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], tol) << "component " << i;
}

}  // namespace

TEST(Posterior, UniformWithoutGroundingNodes) {
  const DialogueState s(sample_context(1));
  expect_dist_near(s.posterior(), kUniform3, 0.0);
  expect_dist_near(s.recomputed_posterior(), kUniform3, 0.0);
}

TEST(Posterior, ProductOfExpertsExamples) {
  // oracle: tools/oracles/oracles.py
  expect_dist_near(combine(combine(kUniform3, {0.8, 0.1, 0.1}), {0.6, 0.1, 0.3}), {0.923077, 0.019231, 0.057692}, 1e-6);
  expect_dist_near(combine(combine(kUniform3, {0.6, 0.3, 0.1}), {0.5, 0.4, 0.1}), {0.697674, 0.279070, 0.023256}, 1e-6);
}

TEST(Posterior, FactorOrderDoesNotMatter) {
  const Dist3 a{0.6, 0.3, 0.1}, b{0.5, 0.4, 0.1};
  expect_dist_near(combine(combine(kUniform3, a), b), combine(combine(kUniform3, b), a), 1e-15);
}

TEST(Posterior, GraphBatchProductMatchesRunningProduct) {
  Rng rng(21);
  std::gamma_distribution<double> g(1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    CoherenceGraph graph;
    Dist3 running = kUniform3;
    const int len = 1 + trial % 6;
    for (int k = 0; k < len; ++k) {
      UtteranceNode n;
      n.lf = LogicalForm::make(Act::Describe, {"teal"});
      if (k % 3 != 2) {
        n.distribution = normalize({g(rng), g(rng), g(rng)});
        running = combine(running, *n.distribution);
      }
      graph.add(n, k ? std::optional<Relation>(Relation::Elaboration) : std::nullopt);
    }
    ASSERT_TRUE(graph.is_tree());
    expect_dist_near(batch_posterior(graph), running, 1e-12);
  }
}

TEST(Attach, DescribeThenNegationUsesListeners) {
  const ColorContext ctx = sample_context(3);
  const Lexicon& lex = lexicon();
  const std::string a = lex[0].id, b = lex[5].id;
  DialogueState s(ctx);
  s = s.attach(LogicalForm::make(Act::Describe, {a}), Role::Director, lex);
  const Dist3 l1 = listener(lex[0], ctx, false);
  expect_dist_near(s.posterior(), l1, 1e-15);
  s = s.attach(LogicalForm::make(Act::NegateDescription, {b}), Role::Director, lex);
  const Dist3 l2 = listener(lex[5], ctx, true);
  Dist3 expect{l1[0] * l2[0], l1[1] * l2[1], l1[2] * l2[2]};
  expect_dist_near(s.posterior(), normalize(expect), 1e-12);
  expect_dist_near(s.posterior(), s.recomputed_posterior(), 1e-12);
  EXPECT_EQ(s.term_count(), 2);
  EXPECT_EQ(s.l_conv(), 2);
  ASSERT_EQ(s.graph().edges().size(), 1u);
  EXPECT_EQ(s.graph().edges()[0].relation, Relation::Contrast);
}

TEST(Attach, AnswerWithoutClarificationIsAnError) {
  const DialogueState s(sample_context(4));
  EXPECT_THROW(s.attach(LogicalForm::make(Act::AffirmTerm, {"teal"}), Role::Director, lexicon()), std::logic_error);
  EXPECT_THROW(s.attach(LogicalForm::make(Act::NegateTerm, {"teal"}), Role::Director, lexicon()), std::logic_error);
}

TEST(Attach, NothingAfterSelect) {
  DialogueState s(sample_context(5));
  s = s.attach(LogicalForm::make(Act::Describe, {"teal"}), Role::Director, lexicon()).end_turn(Role::Director);
  s = s.attach(LogicalForm::make(Act::Select, {}, 1), Role::Matcher, lexicon());
  EXPECT_TRUE(s.closed());
  EXPECT_EQ(s.selected(), 1);
  EXPECT_THROW(s.attach(LogicalForm::make(Act::Describe, {"teal"}), Role::Director, lexicon()), std::logic_error);
  EXPECT_EQ(s.graph().edges().back().relation, Relation::Acknowledge);
}

TEST(Attach, ClarificationExchange) {
  const Lexicon& lex = lexicon();
  DialogueState s(sample_context(6));
  s = s.attach(LogicalForm::make(Act::Describe, {"teal"}), Role::Director, lex).end_turn(Role::Director);
  EXPECT_EQ(s.to_move(), Role::Matcher);
  s = s.attach(LogicalForm::make(Act::ClarifyTerm, {"dark_blue"}), Role::Matcher, lex);
  EXPECT_TRUE(s.pending_clarification().has_value());
  EXPECT_EQ(s.clarifications(), 1);
  EXPECT_TRUE(s.action_history()[kClarifyFlag]);
  EXPECT_EQ(s.pt(), Role::Matcher);
  const Dist3 before = s.posterior();
  expect_dist_near(before, s.recomputed_posterior(), 1e-12);  // the question carries no distribution
  s = s.end_turn(Role::Matcher);
  s = s.attach(LogicalForm::make(Act::AffirmTerm, {"dark_blue"}), Role::Director, lex);
  EXPECT_FALSE(s.pending_clarification().has_value());
  EXPECT_EQ(s.graph().edges().back().relation, Relation::QuestionAnswerPair);
  EXPECT_EQ(s.term_count(), 2);
  EXPECT_EQ(s.l_conv(), 3);
  EXPECT_EQ(s.pt(), Role::Director);
  EXPECT_TRUE(s.graph().is_tree());
}

TEST(Attach, DirectorEndingTurnDropsPendingQuestion) {
  const Lexicon& lex = lexicon();
  DialogueState s(sample_context(7));
  s = s.attach(LogicalForm::make(Act::Describe, {"teal"}), Role::Director, lex).end_turn(Role::Director);
  s = s.attach(LogicalForm::make(Act::ClarifyPatch, {}, 2), Role::Matcher, lex).end_turn(Role::Matcher);
  ASSERT_TRUE(s.pending_clarification().has_value());
  s = s.end_turn(Role::Director);
  EXPECT_FALSE(s.pending_clarification().has_value());
}

TEST(Attach, TurnOrderIsEnforced) {
  DialogueState s(sample_context(8));
  EXPECT_THROW(s.end_turn(Role::Matcher), std::logic_error);
}

TEST(Attach, InvariantsOverRandomDialogues) {
  const Lexicon& lex = lexicon();
  Rng rng(9);
  std::uniform_int_distribution<int> term(0, int(lex.size()) - 1), coin(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    DialogueState s(sample_context(100 + trial, kAllConditions[trial % 3]));
    int last_terms = 0;
    for (int k = 0; k < 6; ++k) {
      const Act act = coin(rng) == 0 ? Act::NegateDescription : Act::Describe;
      s = s.attach(LogicalForm::make(act, {lex[std::size_t(term(rng))].id}), Role::Director, lex);
      EXPECT_TRUE(is_distribution(s.posterior()));
      EXPECT_GE(s.term_count(), last_terms);
      last_terms = s.term_count();
      EXPECT_EQ(s.l_conv(), int(s.graph().size()));
      EXPECT_TRUE(s.graph().is_tree());
    }
    int with_terms = 0;
    for (const auto& n : s.graph().nodes()) with_terms += n.speaker == Role::Director && !n.lf.terms.empty();
    EXPECT_EQ(s.term_count(), with_terms);
  }
}

TEST(Snapshot, HidesTargetUnlessRevealed) {
  DialogueState s(sample_context(10));
  s = s.attach(LogicalForm::make(Act::Describe, {"teal"}), Role::Director, lexicon());
  const auto open = to_json(s, false);
  EXPECT_FALSE(open.contains("target"));
  EXPECT_FALSE(open.contains("posterior"));
  EXPECT_FALSE(open["graph"]["nodes"][0].contains("distribution"));
  const auto full = to_json(s, true);
  EXPECT_EQ(full["target"], s.context().target_index);
  EXPECT_EQ(full["posterior"].size(), 3u);
}
