// Acceptance checks. Usage: acceptance [--criterion N]; prints one PASS/FAIL line per criterion.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "cicrl/experiment.hpp"

using namespace cicrl;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string f(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

const ExperimentConfig& config() {
  static const ExperimentConfig c = load_config(std::string(CICRL_CONFIG_DIR) + "/default.json");
  return c;
}

const Lexicon& lexicon() {
  static const Lexicon lex = Lexicon::load(config().lexicon_path);
  return lex;
}

const std::vector<ColorContext>& test_contexts() {
  static const std::vector<ColorContext> ctxs = test_set(config());
  return ctxs;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EvalResult eval(PolicyKind kind, const MatcherProfile& p) {
  return evaluate(BaselineDirector(kind), p, test_contexts(), lexicon(), config().seeds, config().rewards);
}

MatcherProfile clarifying() {
  MatcherProfile p = config().matcher;
  p.kind = MatcherKind::Clarifying;
  return p;
}

MatcherProfile always_select() {
  MatcherProfile p = config().matcher;
  p.kind = MatcherKind::AlwaysSelect;
  return p;
}

TrainResult train_against(const MatcherProfile& profile, double lr) {
  DqnConfig dc = config().dqn;
  dc.lr = lr;
  return train(dc, profile, train_set(config()), lexicon(), config().rewards);
}

StateVector one_hot(int i) {
  StateVector s{};
  s[std::size_t(i)] = 1.0;
  return s;
}

// ---------------------------------------------------------------------------

Verdict ac1() {
  const auto t0 = std::chrono::steady_clock::now();
  const Dist3 nf = noisy_finger({1.0, 0.0, 0.0}, 4.5);
  const Dist3 ref{0.9783, 0.0109, 0.0109};
  double err = 0.0;
  for (int k = 0; k < 3; ++k) err = std::max(err, std::abs(nf[k] - ref[k]));
  bool ok = err <= 1e-4;
  std::string detail = "noisy_finger err=" + f(err, 6);
  const Dist3 p{0.6, 0.3, 0.1};
  for (double alpha : {0.05, 0.15, 1.0}) {
    Rng rng(derive_seed(1, std::uint64_t(alpha * 1000)));
    Dist3 mean{0, 0, 0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const Dist3 d = gamma_perturb(p, alpha, rng);
      for (int k = 0; k < 3; ++k) mean[k] += d[k] / n;
    }
    double dev = 0.0;
    for (int k = 0; k < 3; ++k) dev = std::max(dev, std::abs(mean[k] - p[k]));
    ok = ok && dev <= 0.01;
    detail += " mean_dev(a=" + f(alpha, 2) + ")=" + f(dev);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 10.0;
  return {ok, detail + " time=" + f(secs, 2) + "s"};
}

Verdict ac2() {
  Rng rng(2);
  double worst = 0.0;
  const int chains = 10000;
  for (int c = 0; c < chains; ++c) {
    const int len = 1 + int(uniform01(rng) * 6);
    CoherenceGraph g;
    Dist3 running = kUniform3;
    for (int i = 0; i < len; ++i) {
      UtteranceNode n;
      if (uniform01(rng) < 0.85) {
        n.distribution = gamma_perturb(kUniform3, 1.0, rng);
        running = combine(running, *n.distribution);
      }
      g.add(n, i == 0 ? std::nullopt : std::optional<Relation>(Relation::Elaboration));
    }
    const Dist3 batch = batch_posterior(g);
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(batch[k] - running[k]));
  }
  // the same identity through real dialogue states
  Rng gen(3);
  const DirectorKind moves[] = {DirectorKind::DescribeTarget, DirectorKind::NegateBothDistractors,
                                DirectorKind::NegateClosestDistractor};
  for (int c = 0; c < 1000; ++c) {
    DialogueState s(generate_context(kAllConditions[c % 3], gen));
    const int len = 1 + c % 6;
    for (int i = 0; i < len; ++i) s = execute_action(moves[(c + i) % 3], s, lexicon()).second;
    const Dist3 b = s.recomputed_posterior();
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(b[k] - s.posterior()[k]));
  }
  return {worst <= 1e-12, "max |incremental - batch| = " + std::to_string(worst) + " over " +
                              std::to_string(chains) + " factor chains + 1000 dialogue chains"};
}

Verdict ac3() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;

  // hand-computed TD errors
  {
    Mlp policy(kStateSize, 4, kNumDirectorActions), target(kStateSize, 4, kNumDirectorActions);
    const std::size_t n = policy.params().size();
    for (std::size_t k = 0; k < 6; ++k) policy.params()[n - 6 + k] = 0.5;
    target.params()[n - 6 + 0] = 3.0;
    target.params()[n - 6 + 5] = 1.0;
    Transition term;
    term.a = 2;
    term.r = 0.95;
    term.terminal = true;
    Transition boot;
    boot.a = 1;
    boot.r = 0.2;
    boot.next_legal = {false, false, false, false, false, true};
    Transition boot_all = boot;
    boot_all.next_legal = {true, true, true, true, true, true};
    const Mlp zero(kStateSize, 4, kNumDirectorActions);
    Transition z;
    const double d1 = td_delta(term, policy, target, 0.95);      // 0.5 - 0.95
    const double d2 = td_delta(boot, policy, target, 0.5);       // 0.5 - (0.2 + 0.5 * 1)
    const double d3 = td_delta(boot_all, policy, target, 0.5);   // 0.5 - (0.2 + 0.5 * 3)
    const double d4 = td_delta(z, zero, zero, 0.95);
    const bool exact = d1 == 0.5 - 0.95 && d2 == 0.5 - (0.2 + 0.5 * 1.0) && d3 == 0.5 - (0.2 + 0.5 * 3.0) && d4 == 0.0;
    ok = ok && exact;
    detail += std::string("td_delta ") + (exact ? "exact" : "MISMATCH") + " (" + f(d1, 6) + "," + f(d2, 6) + "," +
              f(d3, 6) + "," + f(d4, 6) + ")";
  }

  // analytic vs central-difference gradients
  {
    Rng rng(4);
    double worst = 0.0;
    for (int b = 0; b < 100; ++b) {
      const Mlp target = Mlp::random(kStateSize, 64, kNumDirectorActions, rng);
      Mlp policy = Mlp::random(kStateSize, 64, kNumDirectorActions, rng);
      std::vector<Transition> ts(8);
      for (auto& t : ts) {
        for (double& v : t.s) v = uniform01(rng);
        for (double& v : t.s_next) v = uniform01(rng);
        t.a = int(uniform01(rng) * 6);
        t.r = uniform01(rng) * 2 - 1;
        t.terminal = uniform01(rng) < 0.3;
      }
      std::vector<const Transition*> batch;
      for (auto& t : ts) batch.push_back(&t);
      std::vector<double> grad;
      td_loss(batch, policy, target, 0.95, &grad);
      const double h = 1e-6;
      for (std::size_t i = 0; i < policy.params().size(); ++i) {
        const double keep = policy.params()[i];
        policy.params()[i] = keep + h;
        const double up = td_loss(batch, policy, target, 0.95);
        policy.params()[i] = keep - h;
        const double down = td_loss(batch, policy, target, 0.95);
        policy.params()[i] = keep;
        const double fd = (up - down) / (2 * h);
        // relative error, floored so that vanishing gradients compare absolutely
        const double rel = std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-3});
        worst = std::max(worst, rel);
      }
    }
    ok = ok && worst < 1e-4;
    detail += " grad_rel_err=" + std::to_string(worst);
  }

  // two-state MDP with known Q*
  {
    const double qstar[2][6] = {{1.9, 1.0, 0, 0, 0, 0}, {2.0, 1.905, 1.905, 1.905, 1.905, 1.905}};
    std::vector<Transition> ts;
    for (int a = 0; a < 6; ++a) {
      Transition t;
      t.s = one_hot(0);
      t.a = a;
      if (a == 0) t.s_next = one_hot(1);
      else {
        t.r = a == 1 ? 1.0 : 0.0;
        t.terminal = true;
      }
      ts.push_back(t);
    }
    for (int a = 0; a < 6; ++a) {
      Transition t;
      t.s = one_hot(1);
      t.a = a;
      if (a == 0) {
        t.r = 2.0;
        t.terminal = true;
      } else {
        t.r = 0.1;
        t.s_next = one_hot(0);
      }
      ts.push_back(t);
    }
    DqnConfig cfg;
    cfg.lr = 3e-4;
    Rng init(5), rng(6);
    DqnLearner learner(cfg, init);
    ReplayMemory mem(cfg.capacity);
    for (const auto& t : ts) mem.push(t);
    for (int i = 0; i < 20000; ++i) learner.update(mem.sample(cfg.batch, rng));
    double err = 0.0;
    for (int s = 0; s < 2; ++s) {
      const auto q = learner.policy().predict(one_hot(s));
      for (int a = 0; a < 6; ++a) err = std::max(err, std::abs(q[std::size_t(a)] - qstar[s][a]));
    }
    ok = ok && err < 1e-2;
    detail += " mdp_max_err=" + f(err, 5) + " after 20000 updates";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  return {ok, detail + " time=" + f(secs, 1) + "s"};
}

Verdict ac4() {
  const MatcherProfile as = always_select(), cl = clarifying();
  const double gap_as = eval(PolicyKind::Extended, as).success_rate() - eval(PolicyKind::Direct, as).success_rate();
  const double gap_cl = eval(PolicyKind::Extended, cl).success_rate() - eval(PolicyKind::Direct, cl).success_rate();
  const double reduction = gap_as > 0 ? (gap_as - gap_cl) / gap_as : 0.0;
  const bool ok = gap_as > 0 && gap_cl < gap_as && reduction >= 0.5;
  return {ok, "gap(always_select)=" + f(gap_as) + " gap(clarifying@" + f(cl.select_threshold, 2) + ")=" + f(gap_cl) +
                  " reduction=" + f(reduction, 3) + " (need gap_as>0 and reduction>=0.5)"};
}

Verdict ac5() {
  bool ok = true;
  std::string detail;
  for (double alpha : config().alpha_grid) {
    MatcherProfile p = always_select();
    p.alpha = alpha;
    const double d = eval(PolicyKind::Direct, p).success_rate(), e = eval(PolicyKind::Extended, p).success_rate();
    ok = ok && e >= d;
    if (alpha == 0.05) ok = ok && e - d >= 0.08;
    detail += "a=" + f(alpha, 2) + ":ext=" + f(e, 3) + "/dir=" + f(d, 3) + " ";
  }
  return {ok, detail + "(need ext>=dir everywhere, gap>=0.08 at a=0.05)"};
}

Verdict ac6() {
  const MatcherProfile p = always_select();
  const EvalResult d = eval(PolicyKind::Direct, p), e = eval(PolicyKind::Extended, p);
  double positive = 0.0;
  std::string detail;
  for (Condition c : kAllConditions) {
    const std::size_t i = static_cast<std::size_t>(c);
    const int gain = e.by_condition[i].successes - d.by_condition[i].successes;
    positive += std::max(gain, 0);
    detail += std::string(to_string(c)) + "_gain=" + std::to_string(gain) + " ";
  }
  const int close_gain = e.by_condition[std::size_t(Condition::Close)].successes -
                         d.by_condition[std::size_t(Condition::Close)].successes;
  const int total = e.successes - d.successes;
  const double share = positive > 0 ? std::max(close_gain, 0) / positive : 0.0;
  const bool ok = total > 0 && share >= 0.6;
  return {ok, detail + "total_gain=" + std::to_string(total) + " close_share=" + f(share, 3) +
                  " (need total>0 and close share>=0.6)"};
}

Verdict ac7() {
  const MatcherProfile p = always_select();
  std::vector<PolicyStats> stats;
  for (auto [name, kind] : {std::pair{"direct", PolicyKind::Direct}, std::pair{"extended", PolicyKind::Extended},
                            std::pair{"mixed", PolicyKind::Mixed}}) {
    const EvalResult r = eval(kind, p);
    stats.push_back({name, r.success_rate(), r.avg_terms()});
  }
  const RewardSpace rs = reward_space_analysis(stats, config().r_term_grid, config().rewards.r_success,
                                               config().rewards.r_failure, "mixed");
  bool near = false;
  std::string regions;
  for (auto [lo, hi] : rs.focus_regions) {
    regions += "[" + f(lo) + "," + f(hi) + "]";
    near = near || (-0.025 >= lo - 0.01 && -0.025 <= hi + 0.01);
  }
  std::string detail;
  for (const auto& s : stats) detail += s.policy + ":p=" + f(s.success_rate, 3) + ",terms=" + f(s.avg_terms, 3) + " ";
  const bool ok = !rs.focus_regions.empty() && near;
  return {ok, detail + "mixed_regions=" + (regions.empty() ? "none" : regions) + " (need non-empty, -0.025 within 0.01)"};
}

Verdict ac8() {
  const auto t0 = std::chrono::steady_clock::now();
  const MatcherProfile p = always_select();
  const TrainResult tr = train_against(p, config().lr_always_select);
  const double train_secs = seconds_since(t0);
  const EvalResult q = evaluate(LearnedDirector(tr.policy, config().dqn.max_actions_per_turn), p, test_contexts(),
                                lexicon(), config().seeds, config().rewards);
  const EvalResult d = eval(PolicyKind::Direct, p), e = eval(PolicyKind::Extended, p);
  const GridFit fit = fit_end_turn_threshold(policy_grid(tr.policy, median_features(test_contexts()), 100));
  const bool reward_ok = q.avg_reward() >= std::max(d.avg_reward(), e.avg_reward()) - 0.005;
  const bool success_ok = q.success_rate() >= d.success_rate() - 0.01 && q.success_rate() <= e.success_rate() + 0.01;
  const bool grid_ok = fit.single_threshold && fit.threshold >= 0.70 && fit.threshold <= 0.95;
  const bool time_ok = train_secs <= 1800.0;
  return {reward_ok && success_ok && grid_ok && time_ok,
          "dqn=" + f(q.success_rate(), 3) + "/" + f(q.avg_reward()) + " direct=" + f(d.success_rate(), 3) + "/" +
              f(d.avg_reward()) + " extended=" + f(e.success_rate(), 3) + "/" + f(e.avg_reward()) +
              " grid_threshold=" + f(fit.threshold, 3) + " agreement=" + f(fit.agreement, 3) +
              " end_turn_cells=" + std::to_string(fit.end_turn_cells) + "/" + std::to_string(fit.feasible_cells) +
              " train=" + f(train_secs, 0) + "s [reward " + (reward_ok ? "ok" : "FAIL") + ", success " +
              (success_ok ? "ok" : "FAIL") + ", grid " + (grid_ok ? "ok" : "FAIL") + "]"};
}

Verdict ac9() {
  const MatcherProfile p = clarifying();
  const TrainResult tr = train_against(p, config().lr_clarifying);
  const EvalResult q = evaluate(LearnedDirector(tr.policy, config().dqn.max_actions_per_turn), p, test_contexts(),
                                lexicon(), config().seeds, config().rewards);
  const EvalResult d = eval(PolicyKind::Direct, p);
  const bool single_ok = q.single_description_rate() >= 0.90;
  const bool answers_ok = q.unanswered_clarifications == 0;
  const bool reward_ok = std::abs(q.avg_reward() - d.avg_reward()) <= 0.01;
  return {single_ok && answers_ok && reward_ok,
          "single_description=" + f(q.single_description_rate(), 3) + " unanswered=" +
              std::to_string(q.unanswered_clarifications) + " clarification_rate=" + f(q.clarification_rate(), 3) +
              " dqn=" + f(q.success_rate(), 3) + "/" + f(q.avg_reward()) + " direct=" + f(d.success_rate(), 3) + "/" +
              f(d.avg_reward()) + " [single " + (single_ok ? "ok" : "FAIL") + ", answers " +
              (answers_ok ? "ok" : "FAIL") + ", reward " + (reward_ok ? "ok" : "FAIL") + "]"};
}

Verdict ac10() {
  const CalibrationResult cal = calibrate_threshold(config().matcher, test_contexts(), lexicon(), config().seeds.front(), 0.03);
  const double direct = eval(PolicyKind::Direct, always_select()).success_rate();
  const bool cal_ok = cal.reachable && std::abs(cal.rate - 0.03) <= 0.01;
  const bool human_ok = std::abs(direct - 0.90) <= 0.05;
  return {cal_ok && human_ok, "calibrated threshold=" + f(cal.threshold) + " rate=" + f(cal.rate) +
                                  " direct_success=" + f(direct, 3) + " (need rate 0.03+-0.01, direct 0.90+-0.05)"};
}

Verdict ac11() {
  const Parser parser(Grammar::load(config().grammar_path), lexicon());
  Rng rng(11);
  std::uniform_int_distribution<int> pick_term(0, int(lexicon().size()) - 1), pick_patch(0, 2);
  int round_trips = 0;
  for (int i = 0; i < 1000; ++i) {
    const LogicalForm lf = i % 2 ? LogicalForm::make(Act::ClarifyPatch, {}, pick_patch(rng))
                                 : LogicalForm::make(Act::ClarifyTerm, {lexicon()[std::size_t(pick_term(rng))].id});
    const auto r = parser.parse(realize(lf, lexicon()));
    round_trips += !r.empty() && r[0].lf == lf;
  }
  std::ifstream in(std::string(CICRL_TEST_DATA) + "/parse_golden.json");
  const auto cases = nlohmann::json::parse(in);
  int golden_ok = 0;
  for (const auto& c : cases) {
    const auto r = parser.parse(c["utterance"].get<std::string>());
    const auto& e = c["expect"];
    bool good;
    if (e.is_null()) {
      good = r.empty();
    } else {
      good = !r.empty() && to_string(r[0].lf.act) == e["act"].get<std::string>() &&
             r[0].lf.terms == e.value("terms", std::vector<std::string>{});
      if (good && e.contains("patch")) good = r[0].lf.patch && *r[0].lf.patch == e["patch"].get<int>();
    }
    golden_ok += good;
  }
  const bool ok = round_trips == 1000 && cases.size() >= 25 && golden_ok == int(cases.size());
  return {ok, "round_trip=" + std::to_string(round_trips) + "/1000 golden=" + std::to_string(golden_ok) + "/" +
                  std::to_string(cases.size())};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict ac12() {
  const auto root = std::filesystem::temp_directory_path() / "cicrl_acceptance_determinism";
  std::filesystem::remove_all(root);
  const std::string cli = CICRL_CLI, cfg = std::string(CICRL_CONFIG_DIR) + "/default.json";
  const struct {
    const char* name;
    std::string args;
  } jobs[] = {{"evaluate", "evaluate --policy direct --policy extended --policy mixed --episodes"},
              {"train", "train --episodes 3000"}};
  bool ok = true;
  std::string detail;
  for (const auto& job : jobs) {
    std::string manifests[2];
    for (int run = 0; run < 2; ++run) {
      const auto out = root / (std::string(job.name) + std::to_string(run));
      const std::string cmd = "\"" + cli + "\" " + job.args + " --config \"" + cfg + "\" --out \"" + out.string() + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, std::string(job.name) + " run failed: " + cmd};
      manifests[run] = slurp(out / "manifest.json");
    }
    const bool same = !manifests[0].empty() && manifests[0] == manifests[1];
    ok = ok && same;
    detail += std::string(job.name) + (same ? " identical (" : " DIFFER (") + std::to_string(manifests[0].size()) + " bytes) ";
  }
  std::filesystem::remove_all(root);
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria{ac1, ac2, ac3, ac4, ac5, ac6, ac7, ac8, ac9, ac10, ac11, ac12};
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) which.push_back(std::atoi(argv[++i]));
    else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 2;
    }
  }
  if (which.empty())
    for (int n = 1; n <= int(criteria.size()); ++n) which.push_back(n);
  bool all = true;
  for (int n : which) {
    if (n < 1 || n > int(criteria.size())) {
      std::cerr << "no criterion " << n << "\n";
      return 2;
    }
    Verdict v;
    try {
      v = criteria[std::size_t(n - 1)]();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::cout << "AC" << n << " " << (v.pass ? "PASS" : "FAIL") << " " << v.detail << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
