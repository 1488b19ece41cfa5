#pragma once

#include <array>
#include <stdexcept>

#include "cicrl/coherence.hpp"

namespace cicrl {

/// [P(x0) P(x1) P(x2) | P(target) | 8 action flags | d_min d_max d_avg (/100) | l_conv (/10) | pt]
inline constexpr std::size_t kStateSize = 17;
using StateVector = std::array<double, kStateSize>;

inline StateVector encode_state(const DialogueState& s) {
  StateVector v{};
  const Dist3& p = s.posterior();
  for (std::size_t i = 0; i < 3; ++i) v[i] = p[i];
  v[3] = p[static_cast<std::size_t>(s.context().target_index)];
  for (std::size_t f = 0; f < kNumActionFlags; ++f) v[4 + f] = s.action_history()[f] ? 1.0 : 0.0;
  const DistanceFeatures d = distance_features(s.context());
  v[12] = d.d_min / 100.0;
  v[13] = d.d_max / 100.0;
  v[14] = d.d_avg / 100.0;
  v[15] = s.l_conv() / 10.0;
  v[16] = s.pt() == Role::Director ? 0.0 : 1.0;
  return v;
}

struct RewardParams {
  double r_success = 1.0;
  double r_failure = -0.8;
  double r_term = -0.025;
  double gamma = 0.95;

  void check() const {
    if (r_term > 0.0) throw std::invalid_argument("r_term must be <= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma outside [0,1]");
  }
};

enum class Outcome { None, Success, Failure };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::None: return "none";
    case Outcome::Success: return "success";
    case Outcome::Failure: return "failure";
  }
  return "?";
}

/// Episode-level reward; non-terminal steps earn nothing.
inline double reward(Outcome outcome, int term_count, const RewardParams& p = {}) {
  if (term_count < 0) throw std::invalid_argument("negative term count");
  if (outcome == Outcome::None) return 0.0;
  return (outcome == Outcome::Success ? p.r_success : p.r_failure) + p.r_term * term_count;
}

}  // namespace cicrl
