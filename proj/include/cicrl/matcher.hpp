#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cicrl/coherence.hpp"
#include "cicrl/common.hpp"
#include "cicrl/lexicon.hpp"

namespace cicrl {

enum class MatcherKind { AlwaysSelect, Clarifying };

inline std::string_view to_string(MatcherKind k) {
  return k == MatcherKind::AlwaysSelect ? "always_select" : "clarifying";
}

inline MatcherKind matcher_kind_from_string(std::string_view s) {
  if (s == "always_select") return MatcherKind::AlwaysSelect;
  if (s == "clarifying") return MatcherKind::Clarifying;
  throw std::invalid_argument("unknown matcher kind '" + std::string(s) + "'");
}

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Simulated matcher settings. An infinite `alpha` disables semantic noise and
/// an infinite `tau` makes selection an argmax.
struct MatcherProfile {
  MatcherKind kind = MatcherKind::AlwaysSelect;
  double select_threshold = 0.95;
  double clar_error_rate = 0.10;
  int max_clarifications = 2;
  double tau = 4.5;
  double alpha = 0.15;

  void check() const {
    if (!(select_threshold >= 0.0 && select_threshold <= 1.0)) throw std::invalid_argument("select_threshold outside [0,1]");
    if (!(clar_error_rate >= 0.0 && clar_error_rate <= 1.0)) throw std::invalid_argument("clar_error_rate outside [0,1]");
    if (max_clarifications < 0) throw std::invalid_argument("max_clarifications < 0");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  }
};

inline nlohmann::json to_json(const MatcherProfile& p) {
  auto num = [](double v) { return std::isinf(v) ? nlohmann::json("inf") : nlohmann::json(v); };
  return {{"kind", to_string(p.kind)},
          {"select_threshold", p.select_threshold},
          {"clar_error_rate", p.clar_error_rate},
          {"max_clarifications", p.max_clarifications},
          {"tau", num(p.tau)},
          {"alpha", num(p.alpha)}};
}

inline MatcherProfile profile_from_json(const nlohmann::json& j, MatcherProfile p = {}) {
  auto num = [](const nlohmann::json& v) {
    if (v.is_string() && v.get<std::string>() == "inf") return kInf;
    return v.get<double>();
  };
  if (j.contains("kind")) p.kind = matcher_kind_from_string(j["kind"].get<std::string>());
  if (j.contains("select_threshold")) p.select_threshold = j["select_threshold"].get<double>();
  if (j.contains("clar_error_rate")) p.clar_error_rate = j["clar_error_rate"].get<double>();
  if (j.contains("max_clarifications")) p.max_clarifications = j["max_clarifications"].get<int>();
  if (j.contains("tau")) p.tau = num(j["tau"]);
  if (j.contains("alpha")) p.alpha = num(j["alpha"]);
  p.check();
  return p;
}

inline constexpr double kGammaShapeGuard = 1e-6;

/// log of a Gamma(shape, 1) draw. Small shapes use Gamma(a) = Gamma(a+1) * U^(1/a)
/// in log space, which stays finite where the direct draw underflows to zero.
inline double log_gamma_draw(double shape, Rng& rng) {
  if (shape >= 1.0) return std::log(std::gamma_distribution<double>(shape, 1.0)(rng));
  const double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(rng);
  double u = uniform01(rng);
  while (u <= 0.0) u = uniform01(rng);
  return std::log(g) + std::log(u) / shape;
}

/// Unnormalized log weights of a Dirichlet(alpha * p) draw.
inline Dist3 log_gamma_perturb(const Dist3& p, double alpha, Rng& rng) {
  Dist3 out{};
  for (int i = 0; i < 3; ++i) out[i] = log_gamma_draw(alpha * p[i] + kGammaShapeGuard, rng);
  return out;
}

inline Dist3 gamma_perturb(const Dist3& p, double alpha, Rng& rng) {
  return softmax_log(log_gamma_perturb(p, alpha, rng));
}

/// softmax(tau * p). An infinite tau splits the mass evenly over the maxima.
inline Dist3 noisy_finger(const Dist3& p, double tau) {
  if (std::isinf(tau)) {
    const double m = std::max({p[0], p[1], p[2]});
    return normalize({p[0] == m ? 1.0 : 0.0, p[1] == m ? 1.0 : 0.0, p[2] == m ? 1.0 : 0.0});
  }
  return softmax_log({tau * p[0], tau * p[1], tau * p[2]});
}

inline int sample_index(const Dist3& p, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int i = 0; i < 2; ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return 2;
}

struct MatcherAction {
  enum class Kind { Select, Clarify } kind = Kind::Select;
  int patch = 0;
  LogicalForm lf;
};

/// Per-episode memory of the matcher: one perturbed factor per grounding node,
/// drawn once when the node is first seen.
struct MatcherMemory {
  std::vector<std::optional<Dist3>> log_factors;

  Dist3 belief(const DialogueState& s, double alpha, Rng& rng) {
    const auto& nodes = s.graph().nodes();
    Dist3 acc{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (i >= log_factors.size()) {
        std::optional<Dist3> f;
        if (const auto& d = nodes[i].distribution) {
          if (std::isinf(alpha)) f = Dist3{std::log((*d)[0]), std::log((*d)[1]), std::log((*d)[2])};
          else f = log_gamma_perturb(*d, alpha, rng);
        }
        log_factors.push_back(f);
      }
      if (const auto& f = log_factors[i])
        for (int k = 0; k < 3; ++k) acc[k] += (*f)[k];
    }
    return softmax_log(acc);
  }
};

/// The two patches the matcher finds most likely, most likely first.
inline std::pair<int, int> top_two(const Dist3& p) {
  const int a = argmax3(p);
  int b = -1;
  for (int i = 0; i < 3; ++i)
    if (i != a && (b < 0 || p[i] > p[b])) b = i;
  return {a, b};
}

/// Speaker-best term for the most likely patch against the second most likely one.
inline int separating_term(const Dist3& belief, const ColorContext& ctx, const Lexicon& lex) {
  const auto [a, b] = top_two(belief);
  const Color other = ctx.patches[static_cast<std::size_t>(b)];
  return argmax_excluding(speaker_scores(lex, ctx.patches[static_cast<std::size_t>(a)], std::span<const Color>(&other, 1)), {});
}

/// One matcher decision after the director has ended its turn.
inline MatcherAction matcher_step(const MatcherProfile& profile, const DialogueState& s, const Lexicon& lex, Rng& rng,
                                  MatcherMemory& memory) {
  if (s.closed() || s.to_move() != Role::Matcher) throw std::logic_error("matcher_step before the director ended its turn");
  const Dist3 belief = memory.belief(s, profile.alpha, rng);
  const double top = std::max({belief[0], belief[1], belief[2]});
  const bool must_select = profile.kind == MatcherKind::AlwaysSelect || top >= profile.select_threshold ||
                           s.clarifications() >= profile.max_clarifications;
  MatcherAction act;
  if (must_select) {
    act.kind = MatcherAction::Kind::Select;
    act.patch = sample_index(noisy_finger(belief, profile.tau), rng);
    act.lf = LogicalForm::make(Act::Select, {}, act.patch);
    return act;
  }
  act.kind = MatcherAction::Kind::Clarify;
  int term;
  if (uniform01(rng) < profile.clar_error_rate) {
    term = std::uniform_int_distribution<int>(0, static_cast<int>(lex.size()) - 1)(rng);
  } else {
    term = separating_term(belief, s.context(), lex);
  }
  act.lf = LogicalForm::make(Act::ClarifyTerm, {lex[static_cast<std::size_t>(term)].id});
  return act;
}

}  // namespace cicrl
