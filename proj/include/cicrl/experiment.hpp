#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cicrl/dqn.hpp"
#include "cicrl/episode.hpp"

namespace cicrl {

// ---- configuration ---------------------------------------------------------

struct ExperimentConfig {
  std::string lexicon_path = "assets/lexicon.json";
  std::string grammar_path = "assets/grammar.json";
  int train_contexts = 5000;
  int test_contexts = 1000;
  std::uint64_t train_seed = 11;
  std::uint64_t test_seed = 7;
  ConditionThresholds thresholds;
  MatcherProfile matcher;
  std::vector<std::string> policies{"direct", "extended", "mixed"};
  std::vector<std::uint64_t> seeds{1};
  RewardParams rewards;
  DqnConfig dqn;
  double lr_always_select = 1e-2;
  double lr_clarifying = 7.5e-5;
  std::vector<double> threshold_grid{0.0, 0.5, 0.8, 0.9, 0.95, 0.99};
  std::vector<double> tau_grid{1.0, 2.0, 4.5, 10.0, 20.0};
  std::vector<double> alpha_grid{0.03, 0.05, 0.1, 0.15, 0.3};
  std::vector<double> r_term_grid;
  nlohmann::json raw;

  void check() const {
    if (train_contexts <= 0 || test_contexts <= 0) throw std::invalid_argument("context counts must be positive");
    if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
    if (threshold_grid.empty() || tau_grid.empty() || alpha_grid.empty() || r_term_grid.empty())
      throw std::invalid_argument("sweep grids must be non-empty");
    matcher.check();
    rewards.check();
  }
};

inline std::vector<double> default_r_term_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 80; ++i) g.push_back(-0.0025 * i);
  return g;
}

/// Resolves `path` against `base` unless absolute or already existing.
inline std::string resolve_path(const std::string& path, const std::filesystem::path& base) {
  std::filesystem::path p(path);
  if (p.is_absolute() || std::filesystem::exists(p) || base.empty()) return path;
  return (base / p).string();
}

inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  ExperimentConfig c;
  c.raw = j;
  c.lexicon_path = resolve_path(j.value("lexicon", c.lexicon_path), base);
  c.grammar_path = resolve_path(j.value("grammar", c.grammar_path), base);
  if (j.contains("contexts")) {
    const auto& cj = j["contexts"];
    c.train_contexts = cj.value("train", c.train_contexts);
    c.test_contexts = cj.value("test", c.test_contexts);
    c.train_seed = cj.value("train_seed", c.train_seed);
    c.test_seed = cj.value("test_seed", c.test_seed);
  }
  if (j.contains("thresholds")) {
    c.thresholds.close_below = j["thresholds"].value("close_below", c.thresholds.close_below);
    c.thresholds.far_above = j["thresholds"].value("far_above", c.thresholds.far_above);
  }
  if (j.contains("matcher")) c.matcher = profile_from_json(j["matcher"]);
  c.policies = j.value("policies", c.policies);
  c.seeds = j.value("seeds", c.seeds);
  if (j.contains("rewards")) {
    const auto& r = j["rewards"];
    c.rewards.r_success = r.value("r_success", c.rewards.r_success);
    c.rewards.r_failure = r.value("r_failure", c.rewards.r_failure);
    c.rewards.r_term = r.value("r_term", c.rewards.r_term);
    c.rewards.gamma = r.value("gamma", c.rewards.gamma);
  }
  if (j.contains("dqn")) {
    c.dqn = dqn_config_from_json(j["dqn"]);
    c.lr_always_select = j["dqn"].value("lr_always_select", c.lr_always_select);
    c.lr_clarifying = j["dqn"].value("lr_clarifying", c.lr_clarifying);
  }
  c.dqn.gamma = c.rewards.gamma;
  c.r_term_grid = default_r_term_grid();
  if (j.contains("sweeps")) {
    const auto& s = j["sweeps"];
    c.threshold_grid = s.value("threshold", c.threshold_grid);
    c.tau_grid = s.value("tau", c.tau_grid);
    c.alpha_grid = s.value("alpha", c.alpha_grid);
    c.r_term_grid = s.value("r_term", c.r_term_grid);
  }
  c.check();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return config_from_json(nlohmann::json::parse(in), std::filesystem::path(path).parent_path());
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const nlohmann::json& j) { return hex64(fnv1a(j.dump())); }

inline std::vector<ColorContext> test_set(const ExperimentConfig& c) {
  Rng rng(c.test_seed);
  return generate_balanced(c.test_contexts, rng, c.thresholds);
}

inline std::vector<ColorContext> train_set(const ExperimentConfig& c) {
  Rng rng(c.train_seed);
  return generate_balanced(c.train_contexts, rng, c.thresholds);
}

// ---- policies --------------------------------------------------------------

struct PolicySpec {
  PolicyKind kind = PolicyKind::Direct;
  std::string weights;
};

inline PolicySpec parse_policy(const std::string& s) {
  if (s == "direct") return {PolicyKind::Direct, {}};
  if (s == "extended") return {PolicyKind::Extended, {}};
  if (s == "mixed") return {PolicyKind::Mixed, {}};
  if (s.rfind("dqn:", 0) == 0 && s.size() > 4) return {PolicyKind::Learned, s.substr(4)};
  throw std::invalid_argument("unknown policy '" + s + "' (expected direct, extended, mixed or dqn:<weights>)");
}

inline std::unique_ptr<Director> make_director(const PolicySpec& spec, int max_actions_per_turn = 4) {
  if (spec.kind == PolicyKind::Learned) return std::make_unique<LearnedDirector>(load_weights(spec.weights), max_actions_per_turn);
  return std::make_unique<BaselineDirector>(spec.kind);
}

// ---- evaluation ------------------------------------------------------------

struct ConditionStats {
  int episodes = 0;
  int successes = 0;
  double reward_sum = 0.0;
  int clarified = 0;
  long terms = 0;

  double success_rate() const { return episodes ? double(successes) / episodes : 0.0; }
};

struct EvalResult {
  std::string policy;
  int episodes = 0;
  int successes = 0;
  double reward_sum = 0.0;
  int clarified = 0;
  long terms = 0;
  int single_description_openings = 0;
  int unanswered_clarifications = 0;
  std::array<ConditionStats, 3> by_condition{};
  std::vector<EpisodeRecord> records;

  double success_rate() const { return episodes ? double(successes) / episodes : 0.0; }
  double avg_reward() const { return episodes ? reward_sum / episodes : 0.0; }
  double clarification_rate() const { return episodes ? double(clarified) / episodes : 0.0; }
  double avg_terms() const { return episodes ? double(terms) / episodes : 0.0; }
  double single_description_rate() const { return episodes ? double(single_description_openings) / episodes : 0.0; }
  /// 95% normal-approximation half-width on the success rate.
  double ci95() const {
    if (!episodes) return 0.0;
    const double p = success_rate();
    return 1.96 * std::sqrt(p * (1.0 - p) / episodes);
  }
};

/// One episode per (context, seed); the episode stream is derive_seed(seed, context index).
inline EvalResult evaluate(const Director& director, const MatcherProfile& profile,
                           const std::vector<ColorContext>& contexts, const Lexicon& lex,
                           const std::vector<std::uint64_t>& seeds, const RewardParams& rewards = {},
                           bool keep_records = false, int max_actions_per_turn = 4) {
  if (contexts.empty()) throw std::invalid_argument("evaluate needs at least one context");
  EvalResult res;
  res.policy = director.name();
  const DirectorFn fn = as_fn(director, lex);
  EpisodeOptions opt;
  opt.max_actions_per_turn = max_actions_per_turn;
  opt.record_events = keep_records;
  for (std::uint64_t seed : seeds) {
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      Rng rng(derive_seed(seed, i));
      EpisodeRecord rec = run_episode(fn, profile, contexts[i], lex, rng, rewards, opt);
      ConditionStats& cs = res.by_condition[static_cast<std::size_t>(rec.condition)];
      ++res.episodes;
      ++cs.episodes;
      res.successes += rec.success();
      cs.successes += rec.success();
      res.reward_sum += rec.reward;
      cs.reward_sum += rec.reward;
      res.clarified += rec.clarifications > 0;
      cs.clarified += rec.clarifications > 0;
      res.terms += rec.term_count;
      cs.terms += rec.term_count;
      res.single_description_openings += rec.first_turn_descriptions() == 1 && rec.first_turn.front() == DirectorKind::DescribeTarget;
      res.unanswered_clarifications += rec.unanswered_clarifications;
      if (keep_records) res.records.push_back(std::move(rec));
    }
  }
  return res;
}

inline nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json cond = nlohmann::json::object();
  for (Condition c : kAllConditions) {
    const ConditionStats& s = r.by_condition[static_cast<std::size_t>(c)];
    cond[std::string(to_string(c))] = {{"episodes", s.episodes},
                                       {"success_rate", s.success_rate()},
                                       {"avg_reward", s.episodes ? s.reward_sum / s.episodes : 0.0},
                                       {"clarification_rate", s.episodes ? double(s.clarified) / s.episodes : 0.0},
                                       {"avg_terms", s.episodes ? double(s.terms) / s.episodes : 0.0}};
  }
  return {{"policy", r.policy},
          {"episodes", r.episodes},
          {"success_rate", r.success_rate()},
          {"ci95", r.ci95()},
          {"avg_reward", r.avg_reward()},
          {"clarification_rate", r.clarification_rate()},
          {"avg_terms", r.avg_terms()},
          {"single_description_rate", r.single_description_rate()},
          {"unanswered_clarifications", r.unanswered_clarifications},
          {"by_condition", cond}};
}

inline std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(10) << v;
  return o.str();
}

inline const char* kEvalCsvHeader =
    "policy,episodes,success_rate,ci95,avg_reward,clarification_rate,avg_terms,far_success,split_success,close_success";

inline std::string eval_csv_row(const EvalResult& r) {
  return r.policy + "," + std::to_string(r.episodes) + "," + fmt(r.success_rate()) + "," + fmt(r.ci95()) + "," +
         fmt(r.avg_reward()) + "," + fmt(r.clarification_rate()) + "," + fmt(r.avg_terms()) + "," +
         fmt(r.by_condition[0].success_rate()) + "," + fmt(r.by_condition[1].success_rate()) + "," +
         fmt(r.by_condition[2].success_rate());
}

// ---- sweeps ----------------------------------------------------------------

enum class SweepKind { Threshold, Tau, Alpha };

inline SweepKind sweep_kind_from_string(std::string_view s) {
  if (s == "threshold") return SweepKind::Threshold;
  if (s == "tau") return SweepKind::Tau;
  if (s == "alpha") return SweepKind::Alpha;
  throw std::invalid_argument("unknown sweep kind '" + std::string(s) + "'");
}

inline std::string_view to_string(SweepKind k) {
  switch (k) {
    case SweepKind::Threshold: return "threshold";
    case SweepKind::Tau: return "tau";
    case SweepKind::Alpha: return "alpha";
  }
  return "?";
}

struct SweepPoint {
  double value = 0.0;
  EvalResult result;
};

/// Evaluates every director at every grid value with identical context/seed pairs.
/// Threshold sweeps use the clarifying matcher.
inline std::vector<SweepPoint> sweep(SweepKind kind, const std::vector<double>& grid,
                                     const std::vector<const Director*>& directors, MatcherProfile profile,
                                     const std::vector<ColorContext>& contexts, const Lexicon& lex,
                                     const std::vector<std::uint64_t>& seeds, const RewardParams& rewards = {}) {
  if (grid.empty()) throw std::invalid_argument("empty sweep grid");
  std::vector<SweepPoint> out;
  for (double v : grid) {
    MatcherProfile p = profile;
    switch (kind) {
      case SweepKind::Threshold:
        p.kind = MatcherKind::Clarifying;
        p.select_threshold = v;
        break;
      case SweepKind::Tau: p.tau = v; break;
      case SweepKind::Alpha: p.alpha = v; break;
    }
    p.check();
    for (const Director* d : directors) out.push_back({v, evaluate(*d, p, contexts, lex, seeds, rewards)});
  }
  return out;
}

inline std::string sweep_csv(SweepKind kind, const std::vector<SweepPoint>& pts) {
  std::string out = std::string(to_string(kind)) + "," + kEvalCsvHeader + "\n";
  for (const auto& p : pts) out += fmt(p.value) + "," + eval_csv_row(p.result) + "\n";
  return out;
}

// ---- reward space ----------------------------------------------------------

struct PolicyStats {
  std::string policy;
  double success_rate = 0.0;
  double avg_terms = 0.0;
};

inline double expected_reward(const PolicyStats& s, double r_term, double r_success, double r_failure) {
  return s.success_rate * r_success + (1.0 - s.success_rate) * r_failure + r_term * s.avg_terms;
}

struct RewardSpaceRow {
  double r_term = 0.0;
  std::vector<double> expected;  // aligned with the policy list
  std::string best;
};

struct RewardSpace {
  std::vector<PolicyStats> policies;
  std::vector<RewardSpaceRow> rows;
  /// Closed r_term intervals (grid points) where `focus` beats every other policy.
  std::vector<std::pair<double, double>> focus_regions;
  std::string focus;
};

inline RewardSpace reward_space_analysis(const std::vector<PolicyStats>& stats, const std::vector<double>& r_term_grid,
                                         double r_success = 1.0, double r_failure = -0.8,
                                         const std::string& focus = "mixed") {
  RewardSpace out;
  out.policies = stats;
  out.focus = focus;
  auto grid = r_term_grid;
  std::sort(grid.begin(), grid.end());
  std::optional<std::pair<double, double>> open;
  for (double r : grid) {
    RewardSpaceRow row;
    row.r_term = r;
    std::size_t best = 0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
      row.expected.push_back(expected_reward(stats[i], r, r_success, r_failure));
      if (row.expected[i] > row.expected[best]) best = i;
    }
    row.best = stats.empty() ? "" : stats[best].policy;
    bool focus_wins = false;
    for (std::size_t i = 0; i < stats.size(); ++i) {
      if (stats[i].policy != focus) continue;
      focus_wins = true;
      for (std::size_t k = 0; k < stats.size(); ++k)
        if (k != i && !(row.expected[i] > row.expected[k])) focus_wins = false;
    }
    if (focus_wins) {
      if (open) open->second = r;
      else open = std::make_pair(r, r);
    } else if (open) {
      out.focus_regions.push_back(*open);
      open.reset();
    }
    out.rows.push_back(std::move(row));
  }
  if (open) out.focus_regions.push_back(*open);
  return out;
}

inline std::string reward_space_csv(const RewardSpace& rs) {
  std::string out = "r_term";
  for (const auto& p : rs.policies) out += "," + p.policy;
  out += ",best\n";
  for (const auto& row : rs.rows) {
    out += fmt(row.r_term);
    for (double v : row.expected) out += "," + fmt(v);
    out += "," + row.best + "\n";
  }
  return out;
}

// ---- policy grid -----------------------------------------------------------

struct GridCell {
  double p_target = 0.0;
  double p_distractor = 0.0;
  std::optional<DirectorKind> action;  // empty when infeasible
};

struct GridFit {
  double threshold = 0.0;
  double agreement = 0.0;
  int end_turn_cells = 0;
  int feasible_cells = 0;
  bool single_threshold = false;
};

/// Median distance features over a context set, used to fill the grid state.
inline DistanceFeatures median_features(const std::vector<ColorContext>& contexts) {
  std::vector<double> lo, hi, avg;
  for (const auto& c : contexts) {
    const auto f = distance_features(c);
    lo.push_back(f.d_min);
    hi.push_back(f.d_max);
    avg.push_back(f.d_avg);
  }
  auto median = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  return {median(lo), median(hi), median(avg)};
}

/// State after one target description with posterior (pt, pd, 1-pt-pd), target at 0, best distractor at 1.
inline StateVector grid_state(double pt, double pd, const DistanceFeatures& f) {
  StateVector v{};
  v[0] = pt;
  v[1] = pd;
  v[2] = std::max(0.0, 1.0 - pt - pd);
  v[3] = pt;
  v[4 + static_cast<std::size_t>(DirectorKind::DescribeTarget)] = 1.0;
  v[12] = f.d_min / 100.0;
  v[13] = f.d_max / 100.0;
  v[14] = f.d_avg / 100.0;
  v[15] = 0.1;
  v[16] = 0.0;
  return v;
}

inline DirectorKind grid_action(const Mlp& net, double pt, double pd, const DistanceFeatures& f) {
  const LegalMask legal{true, true, false, true, false, true};
  return kAllDirectorKinds[static_cast<std::size_t>(greedy_action(net.predict(grid_state(pt, pd, f)), legal))];
}

inline std::vector<GridCell> policy_grid(const Mlp& net, const DistanceFeatures& f, int steps = 100) {
  std::vector<GridCell> cells;
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; j <= steps; ++j) {
      GridCell c{double(i) / steps, double(j) / steps, std::nullopt};
      if (i + j <= steps) c.action = grid_action(net, c.p_target, c.p_distractor, f);
      cells.push_back(c);
    }
  }
  return cells;
}

/// Best single rule "EndTurn iff P(target) > threshold" over the feasible cells.
inline GridFit fit_end_turn_threshold(const std::vector<GridCell>& cells, double min_agreement = 0.95) {
  std::vector<std::pair<double, bool>> pts;
  for (const auto& c : cells)
    if (c.action) pts.emplace_back(c.p_target, *c.action == DirectorKind::EndTurn);
  GridFit fit;
  fit.feasible_cells = static_cast<int>(pts.size());
  for (const auto& p : pts) fit.end_turn_cells += p.second;
  if (pts.empty()) return fit;
  std::vector<double> values;
  for (const auto& p : pts) values.push_back(p.first);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> candidates{values.front() - 1e-9};
  for (std::size_t i = 0; i + 1 < values.size(); ++i) candidates.push_back(0.5 * (values[i] + values[i + 1]));
  candidates.push_back(values.back());
  fit.agreement = -1.0;
  for (double th : candidates) {
    int agree = 0;
    for (const auto& p : pts) agree += (p.first > th) == p.second;
    const double a = double(agree) / pts.size();
    if (a > fit.agreement) {
      fit.agreement = a;
      fit.threshold = th;
    }
  }
  fit.single_threshold = fit.agreement >= min_agreement;
  return fit;
}

inline std::string policy_grid_csv(const std::vector<GridCell>& cells) {
  std::string out = "p_target,p_distractor,action\n";
  for (const auto& c : cells)
    out += fmt(c.p_target) + "," + fmt(c.p_distractor) + "," + (c.action ? std::string(to_string(*c.action)) : "") + "\n";
  return out;
}

// ---- output files ----------------------------------------------------------

/// Writes files under one directory and records their hashes for manifest.json.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  const std::filesystem::path& path() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << content;
    hashes_[name] = hex64(fnv1a(content));
  }

  /// Deterministic manifest: no timestamps, keys sorted.
  void write_manifest(const std::string& command, const nlohmann::json& config, const std::vector<std::uint64_t>& seeds,
                      const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json m{{"command", command},
                     {"config_hash", config_hash(config)},
                     {"seeds", seeds},
                     {"outputs", hashes_},
                     {"details", extra}};
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    out << m.dump(2) << "\n";
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> hashes_;
};

}  // namespace cicrl
