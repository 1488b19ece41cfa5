#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cicrl/experiment.hpp"

using namespace cicrl;

namespace {

const Lexicon& lexicon() {
  static const Lexicon lex = Lexicon::load(std::string(CICRL_ASSET_DIR) + "/lexicon.json");
  return lex;
}

std::vector<ColorContext> contexts(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return generate_balanced(n, rng);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Mlp biased(std::array<double, 6> b) {
  Mlp m(kStateSize, 4, kNumDirectorActions);
  for (std::size_t k = 0; k < 6; ++k) m.params()[m.params().size() - 6 + k] = b[k];
  return m;
}

}  // namespace

TEST(Config, ShippedConfigLoads) {
  const ExperimentConfig c = load_config(std::string(CICRL_CONFIG_DIR) + "/default.json");
  EXPECT_EQ(c.train_contexts, 5000);
  EXPECT_EQ(c.test_contexts, 1000);
  EXPECT_EQ(c.matcher.tau, 4.5);
  EXPECT_EQ(c.matcher.alpha, 0.15);
  EXPECT_EQ(c.rewards.r_term, -0.025);
  EXPECT_EQ(c.dqn.target_sync, 500);
  EXPECT_TRUE(std::filesystem::exists(c.lexicon_path));
  EXPECT_NO_THROW(c.check());
  EXPECT_EQ(test_set(c).size(), 1000u);
}

TEST(Config, HashIsStableAndSensitive) {
  const nlohmann::json a{{"x", 1}, {"y", {1, 2}}};
  EXPECT_EQ(config_hash(a), config_hash(nlohmann::json::parse(a.dump())));
  EXPECT_NE(config_hash(a), config_hash(nlohmann::json{{"x", 2}, {"y", {1, 2}}}));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, PolicyNames) {
  EXPECT_EQ(parse_policy("mixed").kind, PolicyKind::Mixed);
  const PolicySpec d = parse_policy("dqn:w.json");
  EXPECT_EQ(d.kind, PolicyKind::Learned);
  EXPECT_EQ(d.weights, "w.json");
  EXPECT_THROW(parse_policy("greedy"), std::invalid_argument);
  EXPECT_THROW(parse_policy("dqn:"), std::invalid_argument);
}

TEST(Evaluate, PerfectLexiconNoiselessMatcherAlwaysSucceeds) {
  Rng rng(1);
  std::vector<ColorContext> ctxs;
  std::vector<Term> terms;
  for (int i = 0; i < 20; ++i) {
    ctxs.push_back(generate_context(Condition::Far, rng));
    for (const auto& p : ctxs.back().patches) {
      const std::string id = "t" + std::to_string(terms.size());
      terms.push_back(Term{id, id, p.lab(), {2.0, 2.0, 2.0}});
    }
  }
  const Lexicon lex(terms);
  MatcherProfile noiseless;
  noiseless.tau = kInf;
  noiseless.alpha = kInf;
  const EvalResult r = evaluate(BaselineDirector(PolicyKind::Direct), noiseless, ctxs, lex, {1, 2});
  EXPECT_EQ(r.episodes, 40);
  EXPECT_EQ(r.success_rate(), 1.0);
  EXPECT_EQ(r.ci95(), 0.0);
}

TEST(Evaluate, AverageRewardMatchesEpisodeLog) {
  const auto ctxs = contexts(300, 2);
  const EvalResult r = evaluate(BaselineDirector(PolicyKind::Extended), MatcherProfile{}, ctxs, lexicon(), {1}, {}, true);
  ASSERT_EQ(r.records.size(), 300u);
  double sum = 0.0;
  int wins = 0;
  for (const auto& rec : r.records) {
    sum += reward(rec.selected == rec.target ? Outcome::Success : Outcome::Failure, rec.term_count);
    wins += rec.selected == rec.target;
  }
  EXPECT_NEAR(r.avg_reward(), sum / 300.0, 1e-12);
  EXPECT_EQ(r.successes, wins);
  int per_condition = 0;
  for (const auto& c : r.by_condition) per_condition += c.episodes;
  EXPECT_EQ(per_condition, 300);
  EXPECT_NEAR(r.avg_terms(), 2.0, 1e-12);
}

TEST(Evaluate, PairedSeedingReproduces) {
  const auto ctxs = contexts(200, 3);
  const BaselineDirector d(PolicyKind::Direct);
  const EvalResult a = evaluate(d, MatcherProfile{}, ctxs, lexicon(), {4});
  const EvalResult b = evaluate(d, MatcherProfile{}, ctxs, lexicon(), {4});
  EXPECT_EQ(eval_csv_row(a), eval_csv_row(b));
}

TEST(Sweep, ThresholdSweepUsesClarifyingMatcher) {
  const auto ctxs = contexts(300, 4);
  const BaselineDirector d(PolicyKind::Direct);
  const auto pts = sweep(SweepKind::Threshold, {0.0, 0.99}, {&d}, MatcherProfile{}, ctxs, lexicon(), {1});
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].result.clarification_rate(), 0.0);
  EXPECT_GT(pts[1].result.clarification_rate(), 0.0);
  const std::string csv = sweep_csv(SweepKind::Threshold, pts);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.rfind("threshold,", 0), 0u);
}

TEST(RewardSpace, ZeroPenaltyOrdersBySuccess) {
  const std::vector<PolicyStats> s{{"direct", 0.80, 1.0}, {"extended", 0.85, 2.0}, {"mixed", 0.83, 1.33}};
  const RewardSpace rs = reward_space_analysis(s, {0.0});
  EXPECT_EQ(rs.rows[0].best, "extended");
  const RewardSpace harsh = reward_space_analysis(s, {-100.0});
  EXPECT_EQ(harsh.rows[0].best, "direct");
}

TEST(RewardSpace, FocusRegionsAreContiguousIntervals) {
  // mixed wins for moderate penalties only
  const std::vector<PolicyStats> s{{"direct", 0.80, 1.0}, {"extended", 0.86, 2.0}, {"mixed", 0.85, 1.33}};
  const RewardSpace rs = reward_space_analysis(s, default_r_term_grid());
  ASSERT_EQ(rs.focus_regions.size(), 1u);
  const auto [lo, hi] = rs.focus_regions[0];
  EXPECT_LT(lo, hi);
  for (const auto& row : rs.rows) {
    const bool inside = row.r_term >= lo && row.r_term <= hi;
    EXPECT_EQ(row.best == "mixed", inside) << row.r_term;
  }
  // E_mixed > E_extended iff r_term < -0.018/0.67; E_mixed > E_direct iff r_term > -0.09/0.33
  EXPECT_NEAR(hi, -0.0275, 1e-12);
  EXPECT_NEAR(lo, -0.2, 1e-12);
}

TEST(PolicyGrid, FeasibilityAndThresholdFit) {
  // EndTurn wins iff P(target) is large: output = 10*(x3 - 0.84) on EndTurn via the bias and a hidden unit
  Mlp net(kStateSize, 1, kNumDirectorActions);
  auto& p = net.params();
  p[3] = 1.0;                                   // hidden unit reads P(target)
  p[kStateSize] = 0.0;                          // b1
  const std::size_t w2 = kStateSize + 1, b2 = w2 + kNumDirectorActions;
  p[w2 + 5] = 10.0;                             // EndTurn weight
  p[b2 + 5] = -8.4;                             // EndTurn bias
  const auto f = median_features(contexts(30, 5));
  const auto cells = policy_grid(net, f, 100);
  EXPECT_EQ(cells.size(), 101u * 101u);
  int feasible = 0;
  for (const auto& c : cells) feasible += c.action.has_value();
  EXPECT_EQ(feasible, 101 * 102 / 2);
  for (const auto& c : cells) {
    if (std::abs(c.p_target - 0.8) < 1e-9 && std::abs(c.p_distractor - 0.5) < 1e-9) {
      EXPECT_FALSE(c.action);
    }
    if (std::abs(c.p_target - 0.99) < 1e-9 && std::abs(c.p_distractor) < 1e-9) {
      EXPECT_EQ(*c.action, DirectorKind::EndTurn);
    }
    if (std::abs(c.p_target - 0.34) < 1e-9 && std::abs(c.p_distractor - 0.33) < 1e-9) {
      EXPECT_NE(*c.action, DirectorKind::EndTurn);
    }
  }
  const GridFit fit = fit_end_turn_threshold(cells);
  EXPECT_TRUE(fit.single_threshold);
  EXPECT_EQ(fit.agreement, 1.0);
  EXPECT_NEAR(fit.threshold, 0.84, 0.01);
}

TEST(PolicyGrid, GridStateLayout) {
  const DistanceFeatures f{10.0, 40.0, 25.0};
  const StateVector v = grid_state(0.6, 0.3, f);
  EXPECT_NEAR(v[2], 0.1, 1e-12);
  EXPECT_EQ(v[3], 0.6);
  EXPECT_EQ(v[4], 1.0);
  EXPECT_EQ(v[12], 0.1);
  EXPECT_EQ(v[15], 0.1);
  const Mlp prefers_affirm = biased({0, 0, 5, 0, 0, 0});
  EXPECT_NE(grid_action(prefers_affirm, 0.5, 0.2, f), DirectorKind::AffirmClarTerm);
}

TEST(Output, ManifestIsDeterministic) {
  const auto dir = std::filesystem::temp_directory_path() / "cicrl_manifest_test";
  std::filesystem::remove_all(dir);
  std::string first;
  for (int run = 0; run < 2; ++run) {
    OutputDir out(dir);
    out.write("a.csv", "x,y\n1,2\n");
    out.write_manifest("evaluate", {{"k", 1}}, {1, 2});
    const std::string m = slurp(dir / "manifest.json");
    if (run == 0) first = m;
    else EXPECT_EQ(m, first);
  }
  const auto j = nlohmann::json::parse(first);
  EXPECT_EQ(j["outputs"]["a.csv"], hex64(fnv1a("x,y\n1,2\n")));
  EXPECT_EQ(j["command"], "evaluate");
  EXPECT_FALSE(j.contains("timestamp"));
  std::filesystem::remove_all(dir);
}
