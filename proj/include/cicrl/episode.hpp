#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cicrl/coherence.hpp"
#include "cicrl/matcher.hpp"
#include "cicrl/policies.hpp"
#include "cicrl/state_vector.hpp"

namespace cicrl {

using LegalMask = std::array<bool, kNumDirectorActions>;

/// Chooses the next director action. `turn_start` is the state when the current turn began.
using DirectorFn = std::function<DirectorKind(const DialogueState& turn_start, const DialogueState& now, int step,
                                              const LegalMask& legal)>;

inline DirectorFn as_fn(const Director& d, const Lexicon& lex) {
  return [&d, &lex](const DialogueState& start, const DialogueState& now, int step, const LegalMask&) {
    return d.next(start, now, step, lex);
  };
}

struct EpisodeEvent {
  Role role = Role::Director;
  std::string action;
  LogicalForm lf;
  Dist3 posterior{};
};

/// A director decision point, kept for building replay transitions.
struct DirectorStep {
  StateVector s{};
  int action = 0;
  LegalMask legal{};
};

struct EpisodeRecord {
  Condition condition = Condition::Split;
  int target = 0;
  int selected = -1;
  Outcome outcome = Outcome::None;
  double reward = 0.0;
  int term_count = 0;
  int clarifications = 0;
  int unanswered_clarifications = 0;
  std::vector<DirectorKind> first_turn;
  std::vector<EpisodeEvent> events;
  std::vector<DirectorStep> steps;

  bool success() const { return outcome == Outcome::Success; }
  int first_turn_descriptions() const {
    int n = 0;
    for (DirectorKind k : first_turn) n += k != DirectorKind::EndTurn;
    return n;
  }
};

struct EpisodeOptions {
  int max_actions_per_turn = 4;
  bool record_steps = false;
  bool record_events = false;
};

/// Plays one dialogue between a director and the simulated matcher.
inline EpisodeRecord run_episode(const DirectorFn& director, const MatcherProfile& profile, const ColorContext& ctx,
                                 const Lexicon& lex, Rng& rng, const RewardParams& rewards = {},
                                 const EpisodeOptions& opt = {}) {
  EpisodeRecord rec;
  rec.condition = ctx.condition;
  rec.target = ctx.target_index;
  DialogueState s(ctx);
  MatcherMemory memory;
  bool first_turn = true;
  while (true) {
    // director turn
    const DialogueState turn_start = s;
    const bool answering = s.pending_clarification().has_value();
    int contributed = 0;
    for (int step = 0;; ++step) {
      LegalMask legal = legal_mask(s, lex);
      if (step >= opt.max_actions_per_turn) legal = LegalMask{false, false, false, false, false, true};
      const DirectorKind k = director(turn_start, s, step, legal);
      if (!legal[static_cast<std::size_t>(k)])
        throw std::logic_error("director chose illegal action " + std::string(to_string(k)));
      if (opt.record_steps) rec.steps.push_back({encode_state(s), static_cast<int>(k), legal});
      if (first_turn) rec.first_turn.push_back(k);
      auto [lf, next] = execute_action(k, s, lex);
      s = std::move(next);
      if (opt.record_events) rec.events.push_back({Role::Director, std::string(to_string(k)), lf, s.posterior()});
      if (k == DirectorKind::EndTurn) break;
      ++contributed;
    }
    if (answering && contributed == 0) ++rec.unanswered_clarifications;
    first_turn = false;
    // matcher turn
    const MatcherAction m = matcher_step(profile, s, lex, rng, memory);
    s = s.attach(m.lf, Role::Matcher, lex);
    if (opt.record_events)
      rec.events.push_back({Role::Matcher, m.kind == MatcherAction::Kind::Select ? "Select" : "Clarify", m.lf, s.posterior()});
    if (m.kind == MatcherAction::Kind::Select) {
      rec.selected = m.patch;
      break;
    }
    s = s.end_turn(Role::Matcher);
  }
  rec.outcome = rec.selected == ctx.target_index ? Outcome::Success : Outcome::Failure;
  rec.term_count = s.term_count();
  rec.clarifications = s.clarifications();
  rec.reward = reward(rec.outcome, rec.term_count, rewards);
  return rec;
}

inline nlohmann::json to_json(const EpisodeRecord& r) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.events)
    events.push_back({{"role", to_string(e.role)}, {"action", e.action}, {"lf", to_json(e.lf)}, {"posterior", to_json(e.posterior)}});
  return {{"condition", to_string(r.condition)}, {"target", r.target},       {"selected", r.selected},
          {"outcome", to_string(r.outcome)},     {"reward", r.reward},       {"term_count", r.term_count},
          {"clarifications", r.clarifications},  {"events", events}};
}

struct CalibrationResult {
  double threshold = 0.0;
  double rate = 0.0;
  bool reachable = false;
};

/// Fraction of episodes with at least one clarification, Direct director, common random numbers per context.
inline double clarification_rate(const MatcherProfile& profile, const std::vector<ColorContext>& contexts,
                                 const Lexicon& lex, std::uint64_t seed) {
  const BaselineDirector direct(PolicyKind::Direct);
  const DirectorFn fn = as_fn(direct, lex);
  int asked = 0;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    asked += run_episode(fn, profile, contexts[i], lex, rng).clarifications > 0;
  }
  return contexts.empty() ? 0.0 : double(asked) / double(contexts.size());
}

/// Bisection on the select threshold of a clarifying matcher until the Direct
/// baseline's clarification rate is within `tol` of `target_rate`.
inline CalibrationResult calibrate_threshold(MatcherProfile profile, const std::vector<ColorContext>& contexts,
                                             const Lexicon& lex, std::uint64_t seed, double target_rate = 0.03,
                                             double tol = 0.01, int max_iter = 40) {
  if (contexts.size() < 1000) throw std::invalid_argument("calibration needs at least 1000 contexts");
  profile.kind = MatcherKind::Clarifying;
  auto rate_at = [&](double th) {
    profile.select_threshold = th;
    return clarification_rate(profile, contexts, lex, seed);
  };
  if (target_rate <= 0.0) return {0.0, rate_at(0.0), true};
  double lo = 0.0, hi = 1.0;
  const double r_hi = rate_at(hi);
  if (r_hi < target_rate - tol) return {hi, r_hi, false};
  CalibrationResult best{hi, r_hi, std::abs(r_hi - target_rate) <= tol};
  for (int it = 0; it < max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = rate_at(mid);
    if (std::abs(r - target_rate) < std::abs(best.rate - target_rate)) best = {mid, r, std::abs(r - target_rate) <= tol};
    if (std::abs(r - target_rate) <= tol / 2) break;
    if (r < target_rate) lo = mid;
    else hi = mid;
  }
  best.reachable = std::abs(best.rate - target_rate) <= tol;
  return best;
}

}  // namespace cicrl
