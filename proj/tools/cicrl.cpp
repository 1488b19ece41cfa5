// Command-line front end: context generation, evaluation, sweeps, training,
// reward-space analysis, policy grids, calibration, parsing and the HTTP service.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cicrl/experiment.hpp"
#include "cicrl/grammar.hpp"
#include "cicrl/http.hpp"
#include "cicrl/session.hpp"

#ifndef CICRL_ASSET_DIR
#define CICRL_ASSET_DIR "assets"
#endif

namespace fs = std::filesystem;
using namespace cicrl;

namespace {

ExperimentConfig load_or_default(const std::string& path) {
  if (!path.empty()) return load_config(path);
  nlohmann::json j = nlohmann::json::object();
  j["lexicon"] = std::string(CICRL_ASSET_DIR) + "/lexicon.json";
  j["grammar"] = std::string(CICRL_ASSET_DIR) + "/grammar.json";
  return config_from_json(j);
}

MatcherProfile matcher_for(const ExperimentConfig& cfg, const std::string& kind) {
  MatcherProfile p = cfg.matcher;
  if (!kind.empty()) p.kind = matcher_kind_from_string(kind);
  return p;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json run_config(const ExperimentConfig& cfg, const nlohmann::json& extra) {
  nlohmann::json j{{"config", cfg.raw}, {"args", extra}};
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Referential communication lab: simulated director/matcher dialogues over color contexts"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", matcher_kind;
  std::vector<std::string> policies;

  // generate-contexts
  auto* gen = app.add_subcommand("generate-contexts", "Write a balanced test (or train) context set as JSON lines");
  std::string split = "test";
  gen->add_option("--config", config_path, "Experiment config (JSON)");
  gen->add_option("--out", out_dir, "Output directory");
  gen->add_option("--split", split, "test or train")->check(CLI::IsMember({"test", "train"}));

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Evaluate director policies against the simulated matcher");
  bool keep_episodes = false;
  eval->add_option("--config", config_path, "Experiment config (JSON)");
  eval->add_option("--out", out_dir, "Output directory");
  eval->add_option("--policy", policies, "direct, extended, mixed or dqn:<weights>");
  eval->add_option("--matcher", matcher_kind, "always_select or clarifying")->check(CLI::IsMember({"always_select", "clarifying"}));
  eval->add_flag("--episodes", keep_episodes, "Also write every episode trace");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Sweep the select threshold, tau or alpha");
  std::string sweep_kind = "alpha";
  sw->add_option("--config", config_path, "Experiment config (JSON)");
  sw->add_option("--out", out_dir, "Output directory");
  sw->add_option("--kind", sweep_kind, "threshold, tau or alpha")->check(CLI::IsMember({"threshold", "tau", "alpha"}));
  sw->add_option("--policy", policies, "Policies to compare");
  sw->add_option("--matcher", matcher_kind, "always_select or clarifying")->check(CLI::IsMember({"always_select", "clarifying"}));

  // train
  auto* tr = app.add_subcommand("train", "Train a DQN director");
  int episodes = 0;
  tr->add_option("--config", config_path, "Experiment config (JSON)");
  tr->add_option("--out", out_dir, "Output directory");
  tr->add_option("--matcher", matcher_kind, "always_select or clarifying")->check(CLI::IsMember({"always_select", "clarifying"}));
  tr->add_option("--episodes", episodes, "Override the number of training episodes");

  // reward-space
  auto* rs = app.add_subcommand("reward-space", "Expected reward of each baseline as a function of the term penalty");
  rs->add_option("--config", config_path, "Experiment config (JSON)");
  rs->add_option("--out", out_dir, "Output directory");
  rs->add_option("--matcher", matcher_kind, "always_select or clarifying")->check(CLI::IsMember({"always_select", "clarifying"}));

  // policy-grid
  auto* pg = app.add_subcommand("policy-grid", "Greedy DQN decisions after one description over a posterior grid");
  std::string weights;
  int steps = 100;
  pg->add_option("--config", config_path, "Experiment config (JSON)");
  pg->add_option("--out", out_dir, "Output directory");
  pg->add_option("--weights", weights, "Weight artifact")->required();
  pg->add_option("--steps", steps, "Grid resolution per axis")->check(CLI::Range(2, 1000));

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Fit the select threshold to a clarification rate");
  double target_rate = 0.03;
  cal->add_option("--config", config_path, "Experiment config (JSON)");
  cal->add_option("--out", out_dir, "Output directory");
  cal->add_option("--rate", target_rate, "Target clarification rate")->check(CLI::Range(0.0, 1.0));

  // parse
  auto* ps = app.add_subcommand("parse", "Parse an utterance into ranked logical forms");
  std::string utterance;
  ps->add_option("--config", config_path, "Experiment config (JSON)");
  ps->add_option("--utterance", utterance, "Text to parse")->required();

  // serve
  auto* sv = app.add_subcommand("serve", "Run the HTTP session service");
  int port = 8080;
  std::string host = "127.0.0.1", policy_dir = ".", static_dir;
  std::uint64_t serve_seed = 1;
  sv->add_option("--config", config_path, "Experiment config (JSON)");
  sv->add_option("--port", port, "Port");
  sv->add_option("--host", host, "Bind address");
  sv->add_option("--policy-dir", policy_dir, "Directory holding dqn weight files");
  sv->add_option("--static-dir", static_dir, "Serve a built browser client from this directory");
  sv->add_option("--seed", serve_seed, "Context generation seed");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = load_or_default(config_path);
    const Lexicon lex = Lexicon::load(cfg.lexicon_path);
    const std::string args = [&] {
      std::string s;
      for (int i = 1; i < argc; ++i) s += (i > 1 ? " " : "") + std::string(argv[i]);
      return s;
    }();
    if (policies.empty()) policies = cfg.policies;

    if (*gen) {
      Rng rng(split == "test" ? cfg.test_seed : cfg.train_seed);
      const auto contexts = generate_balanced(split == "test" ? cfg.test_contexts : cfg.train_contexts, rng, cfg.thresholds);
      std::string lines;
      for (const auto& c : contexts) lines += to_json(c).dump() + "\n";
      OutputDir out(out_dir);
      out.write("contexts_" + split + ".jsonl", lines);
      out.write_manifest("generate-contexts", run_config(cfg, {{"split", split}}),
                         {split == "test" ? cfg.test_seed : cfg.train_seed});
      std::cout << "wrote " << contexts.size() << " contexts to " << (out.path() / ("contexts_" + split + ".jsonl")).string() << "\n";
    } else if (*eval) {
      const auto contexts = test_set(cfg);
      const MatcherProfile profile = matcher_for(cfg, matcher_kind);
      OutputDir out(out_dir);
      nlohmann::json results = nlohmann::json::array();
      std::string csv = std::string(kEvalCsvHeader) + "\n";
      for (const auto& p : policies) {
        const auto director = make_director(parse_policy(p), cfg.dqn.max_actions_per_turn);
        EvalResult r = evaluate(*director, profile, contexts, lex, cfg.seeds, cfg.rewards, keep_episodes,
                                cfg.dqn.max_actions_per_turn);
        r.policy = p;
        results.push_back(to_json(r));
        csv += eval_csv_row(r) + "\n";
        std::cout << p << ": success " << r.success_rate() << " +/- " << r.ci95() << ", reward " << r.avg_reward()
                  << ", clarification rate " << r.clarification_rate() << "\n";
        if (keep_episodes) {
          std::string lines;
          for (const auto& e : r.records) lines += to_json(e).dump() + "\n";
          std::string safe = p;
          for (char& c : safe)
            if (c == '/' || c == ':') c = '_';
          out.write("episodes_" + safe + ".jsonl", lines);
        }
      }
      out.write("eval.json", nlohmann::json{{"matcher", to_json(profile)}, {"results", results}}.dump(2) + "\n");
      out.write("eval.csv", csv);
      out.write_manifest("evaluate", run_config(cfg, {{"policies", policies}, {"matcher", to_json(profile)}}), cfg.seeds);
    } else if (*sw) {
      const auto contexts = test_set(cfg);
      const SweepKind kind = sweep_kind_from_string(sweep_kind);
      const std::vector<double>& grid =
          kind == SweepKind::Threshold ? cfg.threshold_grid : kind == SweepKind::Tau ? cfg.tau_grid : cfg.alpha_grid;
      std::vector<std::unique_ptr<Director>> owned;
      std::vector<const Director*> directors;
      for (const auto& p : policies) {
        owned.push_back(make_director(parse_policy(p), cfg.dqn.max_actions_per_turn));
        directors.push_back(owned.back().get());
      }
      const auto pts = sweep(kind, grid, directors, matcher_for(cfg, matcher_kind), contexts, lex, cfg.seeds, cfg.rewards);
      OutputDir out(out_dir);
      const std::string name = "sweep_" + sweep_kind + ".csv";
      out.write(name, sweep_csv(kind, pts));
      out.write_manifest("sweep", run_config(cfg, {{"kind", sweep_kind}, {"policies", policies}}), cfg.seeds);
      std::cout << sweep_csv(kind, pts);
    } else if (*tr) {
      const MatcherProfile profile = matcher_for(cfg, matcher_kind);
      DqnConfig dc = cfg.dqn;
      const bool explicit_lr = cfg.raw.contains("dqn") && cfg.raw["dqn"].contains("lr");
      if (!explicit_lr) dc.lr = profile.kind == MatcherKind::AlwaysSelect ? cfg.lr_always_select : cfg.lr_clarifying;
      if (episodes > 0) dc.episodes = episodes;
      const auto contexts = train_set(cfg);
      std::cerr << "training " << dc.episodes << " episodes against the " << to_string(profile.kind)
                << " matcher (lr " << dc.lr << ")\n";
      const TrainResult res = train(dc, profile, contexts, lex, cfg.rewards, [&](const TrainLogRow& row) {
        if ((row.episode + 1) % 5000 == 0) std::cerr << "  episode " << row.episode + 1 << ", epsilon " << row.epsilon << "\n";
      });
      const nlohmann::json rc = run_config(cfg, {{"matcher", to_json(profile)}, {"dqn", to_json(dc)}});
      OutputDir out(out_dir);
      out.write("weights.json", weights_to_json(res.policy, dc.seed, config_hash(rc)).dump() + "\n");
      out.write("train_log.csv", train_log_csv(res.log));
      out.write_manifest("train", rc, {dc.seed}, {{"updates", res.updates}, {"weights_checksum", hex64(res.policy.checksum())}});
      std::cout << "wrote " << (out.path() / "weights.json").string() << " after " << res.updates << " updates\n";
    } else if (*rs) {
      const auto contexts = test_set(cfg);
      const MatcherProfile profile = matcher_for(cfg, matcher_kind);
      std::vector<PolicyStats> stats;
      for (const char* p : {"direct", "extended", "mixed"}) {
        const auto director = make_director(parse_policy(p));
        const EvalResult r = evaluate(*director, profile, contexts, lex, cfg.seeds, cfg.rewards);
        stats.push_back({p, r.success_rate(), r.avg_terms()});
      }
      const RewardSpace space = reward_space_analysis(stats, cfg.r_term_grid, cfg.rewards.r_success, cfg.rewards.r_failure);
      nlohmann::json summary{{"policies", nlohmann::json::array()}, {"mixed_regions", nlohmann::json::array()}};
      for (const auto& s : stats)
        summary["policies"].push_back({{"policy", s.policy}, {"success_rate", s.success_rate}, {"avg_terms", s.avg_terms}});
      for (const auto& [lo, hi] : space.focus_regions) summary["mixed_regions"].push_back({lo, hi});
      OutputDir out(out_dir);
      out.write("reward_space.csv", reward_space_csv(space));
      out.write("reward_space.json", summary.dump(2) + "\n");
      out.write_manifest("reward-space", run_config(cfg, {{"matcher", to_json(profile)}}), cfg.seeds);
      std::cout << summary.dump(2) << "\n";
    } else if (*pg) {
      const Mlp net = load_weights(weights);
      const auto features = median_features(test_set(cfg));
      const auto cells = policy_grid(net, features, steps);
      const GridFit fit = fit_end_turn_threshold(cells);
      const nlohmann::json summary{{"threshold", fit.threshold},
                                   {"agreement", fit.agreement},
                                   {"single_threshold", fit.single_threshold},
                                   {"end_turn_cells", fit.end_turn_cells},
                                   {"feasible_cells", fit.feasible_cells}};
      OutputDir out(out_dir);
      out.write("policy_grid.csv", policy_grid_csv(cells));
      out.write("policy_grid.json", summary.dump(2) + "\n");
      out.write_manifest("policy-grid", run_config(cfg, {{"weights_hash", hex64(fnv1a(read_file(weights)))}}), {});
      std::cout << summary.dump(2) << "\n";
    } else if (*cal) {
      Rng rng(cfg.test_seed);
      const auto contexts = generate_balanced(std::max(cfg.test_contexts, 1000), rng, cfg.thresholds);
      const CalibrationResult r = calibrate_threshold(cfg.matcher, contexts, lex, cfg.seeds.front(), target_rate);
      const nlohmann::json summary{{"target_rate", target_rate}, {"threshold", r.threshold}, {"rate", r.rate}, {"reachable", r.reachable}};
      OutputDir out(out_dir);
      out.write("calibration.json", summary.dump(2) + "\n");
      out.write_manifest("calibrate", run_config(cfg, {{"rate", target_rate}}), cfg.seeds);
      std::cout << summary.dump(2) << "\n";
      if (!r.reachable) {
        std::cerr << "target clarification rate is not reachable within tolerance\n";
        return 2;
      }
    } else if (*ps) {
      const Parser parser(Grammar::load(cfg.grammar_path), lex);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& r : parser.parse(utterance)) out.push_back({{"lf", to_json(r.lf)}, {"probability", r.probability}});
      std::cout << out.dump(2) << "\n";
    } else if (*sv) {
      const Parser parser(Grammar::load(cfg.grammar_path), lex);
      SessionService service(lex, parser, policy_dir, serve_seed, std::chrono::minutes(30), cfg.rewards, cfg.thresholds);
      httplib::Server server;
      bind_routes(server, service);
      if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) {
        std::cerr << "static directory not found: " << static_dir << "\n";
        return 1;
      }
      std::cerr << "listening on http://" << host << ":" << port << "\n";
      if (!server.listen(host, port)) {
        std::cerr << "could not bind " << host << ":" << port << "\n";
        return 1;
      }
    }
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
