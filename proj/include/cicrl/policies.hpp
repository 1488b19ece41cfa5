#pragma once

#include <array>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cicrl/coherence.hpp"
#include "cicrl/lexicon.hpp"

namespace cicrl {

enum class DirectorKind {
  DescribeTarget = 0,
  NegateBothDistractors = 1,
  AffirmClarTerm = 2,
  NegateClosestDistractor = 3,
  NegateClarTerm = 4,
  EndTurn = 5,
};
inline constexpr int kNumDirectorActions = 6;

inline constexpr std::array<DirectorKind, kNumDirectorActions> kAllDirectorKinds{
    DirectorKind::DescribeTarget, DirectorKind::NegateBothDistractors, DirectorKind::AffirmClarTerm,
    DirectorKind::NegateClosestDistractor, DirectorKind::NegateClarTerm, DirectorKind::EndTurn};

inline std::string_view to_string(DirectorKind k) {
  switch (k) {
    case DirectorKind::DescribeTarget: return "DescribeTarget";
    case DirectorKind::NegateBothDistractors: return "NegateBothDistractors";
    case DirectorKind::AffirmClarTerm: return "AffirmClarTerm";
    case DirectorKind::NegateClosestDistractor: return "NegateClosestDistractor";
    case DirectorKind::NegateClarTerm: return "NegateClarTerm";
    case DirectorKind::EndTurn: return "EndTurn";
  }
  return "?";
}

struct DirectorAction {
  DirectorKind kind = DirectorKind::EndTurn;
  std::optional<LogicalForm> realized_lf;
};

enum class PolicyKind { Direct, Extended, Mixed, Learned };

inline std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Direct: return "direct";
    case PolicyKind::Extended: return "extended";
    case PolicyKind::Mixed: return "mixed";
    case PolicyKind::Learned: return "dqn";
  }
  return "?";
}

namespace detail {

inline std::unordered_set<int> used_term_indices(const DialogueState& s, const Lexicon& lex) {
  std::unordered_set<int> used;
  for (const auto& id : s.director_terms()) used.insert(lex.index_of_id(id));
  return used;
}

inline int closest_distractor(const ColorContext& ctx) {
  int best = -1;
  double best_d = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (i == ctx.target_index) continue;
    const double d = delta_e(ctx.target(), ctx.patches[static_cast<std::size_t>(i)]);
    if (best < 0 || d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

/// Speaker-argmax term for `patch` against the other two patches.
inline int describing_term(const ColorContext& ctx, int patch, const Lexicon& lex,
                           const std::unordered_set<int>& excluded = {}) {
  std::vector<Color> others;
  for (int i = 0; i < 3; ++i)
    if (i != patch) others.push_back(ctx.patches[static_cast<std::size_t>(i)]);
  return argmax_excluding(speaker_scores(lex, ctx.patches[static_cast<std::size_t>(patch)], others), excluded);
}

}  // namespace detail

/// The term a pending clarification is about. For a patch question this is
/// the speaker's best term for the referenced patch.
inline int clarification_term(const LogicalForm& clar, const ColorContext& ctx, const Lexicon& lex) {
  if (clar.act == Act::ClarifyTerm) {
    const int t = lex.index_of_id(clar.terms.front());
    if (t < 0) throw std::invalid_argument("unknown clarification term " + clar.terms.front());
    return t;
  }
  if (clar.act == Act::ClarifyPatch) return detail::describing_term(ctx, *clar.patch, lex);
  throw std::invalid_argument("not a clarification");
}

/// Affirm iff the positive listener for the clarification term puts more than half its mass on the target.
inline DirectorKind answer_kind(const DialogueState& s, const Lexicon& lex) {
  if (!s.pending_clarification()) throw std::logic_error("no pending clarification");
  const int t = clarification_term(*s.pending_clarification(), s.context(), lex);
  const Dist3 l = listener(lex[static_cast<std::size_t>(t)], s.context(), false);
  return l[static_cast<std::size_t>(s.context().target_index)] > 0.5 ? DirectorKind::AffirmClarTerm
                                                                     : DirectorKind::NegateClarTerm;
}

inline bool is_legal(DirectorKind k, const DialogueState& s, const Lexicon& lex) {
  if (s.closed() || s.to_move() != Role::Director) return false;
  switch (k) {
    case DirectorKind::AffirmClarTerm:
    case DirectorKind::NegateClarTerm: return s.pending_clarification().has_value();
    case DirectorKind::DescribeTarget:
    case DirectorKind::NegateBothDistractors:
    case DirectorKind::NegateClosestDistractor: return detail::used_term_indices(s, lex).size() < lex.size();
    case DirectorKind::EndTurn: return true;
  }
  return false;
}

inline std::array<bool, kNumDirectorActions> legal_mask(const DialogueState& s, const Lexicon& lex) {
  std::array<bool, kNumDirectorActions> m{};
  for (int a = 0; a < kNumDirectorActions; ++a) m[static_cast<std::size_t>(a)] = is_legal(kAllDirectorKinds[static_cast<std::size_t>(a)], s, lex);
  return m;
}

/// The logical form an action would emit in `s` (nothing for EndTurn).
inline std::optional<LogicalForm> action_form(DirectorKind k, const DialogueState& s, const Lexicon& lex) {
  const ColorContext& ctx = s.context();
  const auto used = detail::used_term_indices(s, lex);
  auto id = [&](int t) { return lex[static_cast<std::size_t>(t)].id; };
  switch (k) {
    case DirectorKind::DescribeTarget: {
      const int t = detail::describing_term(ctx, ctx.target_index, lex, used);
      return LogicalForm::make(Act::Describe, {id(t)});
    }
    case DirectorKind::NegateBothDistractors: {
      std::vector<double> cover(lex.size());
      for (std::size_t t = 0; t < lex.size(); ++t) {
        double m = 1.0;
        for (int i = 0; i < 3; ++i)
          if (i != ctx.target_index) m = std::min(m, applicability(lex[t], ctx.patches[static_cast<std::size_t>(i)]));
        cover[t] = m;
      }
      return LogicalForm::make(Act::NegateDescription, {id(argmax_excluding(cover, used))});
    }
    case DirectorKind::NegateClosestDistractor: {
      const int t = detail::describing_term(ctx, detail::closest_distractor(ctx), lex, used);
      return LogicalForm::make(Act::NegateDescription, {id(t)});
    }
    case DirectorKind::AffirmClarTerm:
    case DirectorKind::NegateClarTerm: {
      const int t = clarification_term(*s.pending_clarification(), ctx, lex);
      return LogicalForm::make(k == DirectorKind::AffirmClarTerm ? Act::AffirmTerm : Act::NegateTerm, {id(t)});
    }
    case DirectorKind::EndTurn: return std::nullopt;
  }
  return std::nullopt;
}

/// Runs one director action and returns the emitted form (EndTurn included) and the new state.
inline std::pair<LogicalForm, DialogueState> execute_action(DirectorKind k, const DialogueState& s,
                                                            const Lexicon& lex) {
  if (!is_legal(k, s, lex)) throw std::logic_error("illegal director action " + std::string(to_string(k)));
  DialogueState flagged = s.with_flag(static_cast<int>(k));
  if (k == DirectorKind::EndTurn) return {LogicalForm::make(Act::EndTurn), flagged.end_turn(Role::Director)};
  LogicalForm lf = *action_form(k, s, lex);
  DialogueState next = flagged.attach(lf, Role::Director, lex);
  return {std::move(lf), std::move(next)};
}

/// The handcrafted directors' plan for the turn that starts in `s`.
inline std::vector<DirectorKind> baseline_turn(PolicyKind policy, const DialogueState& s, const Lexicon& lex) {
  if (policy == PolicyKind::Learned) throw std::invalid_argument("baseline_turn needs a handcrafted policy");
  if (s.closed() || s.to_move() != Role::Director) throw std::logic_error("not the director's turn");
  if (const auto& clar = s.pending_clarification()) {
    if (clar->act == Act::ClarifyPatch && *clar->patch != s.context().target_index)
      return {DirectorKind::NegateClosestDistractor, DirectorKind::EndTurn};
    return {answer_kind(s, lex), DirectorKind::EndTurn};
  }
  if (!s.graph().empty()) return {DirectorKind::EndTurn};
  const bool extended =
      policy == PolicyKind::Extended || (policy == PolicyKind::Mixed && s.context().condition == Condition::Close);
  if (extended) return {DirectorKind::DescribeTarget, DirectorKind::NegateBothDistractors, DirectorKind::EndTurn};
  return {DirectorKind::DescribeTarget, DirectorKind::EndTurn};
}

/// A director chooses actions one at a time within a turn.
class Director {
 public:
  virtual ~Director() = default;
  virtual std::string name() const = 0;
  /// `turn_start` is the state when the turn began, `now` the current one, `step` the number of actions so far.
  virtual DirectorKind next(const DialogueState& turn_start, const DialogueState& now, int step,
                            const Lexicon& lex) const = 0;
};

class BaselineDirector : public Director {
 public:
  explicit BaselineDirector(PolicyKind kind) : kind_(kind) {
    if (kind == PolicyKind::Learned) throw std::invalid_argument("use a learned director for dqn policies");
  }
  std::string name() const override { return std::string(to_string(kind_)); }
  PolicyKind kind() const { return kind_; }
  DirectorKind next(const DialogueState& turn_start, const DialogueState&, int step,
                    const Lexicon& lex) const override {
    const auto plan = baseline_turn(kind_, turn_start, lex);
    return step < static_cast<int>(plan.size()) ? plan[static_cast<std::size_t>(step)] : DirectorKind::EndTurn;
  }

 private:
  PolicyKind kind_;
};

}  // namespace cicrl
