#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cicrl/episode.hpp"
#include "cicrl/nn.hpp"
#include "cicrl/state_vector.hpp"

namespace cicrl {

struct Transition {
  StateVector s{};
  int a = 0;
  double r = 0.0;
  StateVector s_next{};
  bool terminal = false;
  LegalMask next_legal{true, true, true, true, true, true};
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    buf_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(Transition t) {
    if (buf_.size() < capacity_) buf_.push_back(std::move(t));
    else buf_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }

  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return buf_[i]; }

  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const {
    if (buf_.empty()) throw std::logic_error("sampling from empty replay memory");
    std::uniform_int_distribution<std::size_t> pick(0, buf_.size() - 1);
    std::vector<const Transition*> out(n);
    for (auto& p : out) p = &buf_[pick(rng)];
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> buf_;
};

inline double max_legal(const std::vector<double>& q, const LegalMask& legal) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < q.size(); ++a)
    if (legal[a]) m = std::max(m, q[a]);
  if (!std::isfinite(m)) throw std::logic_error("no legal action");
  return m;
}

inline int greedy_action(const std::vector<double>& q, const LegalMask& legal) {
  int best = -1;
  for (std::size_t a = 0; a < q.size(); ++a)
    if (legal[a] && (best < 0 || q[a] > q[static_cast<std::size_t>(best)])) best = static_cast<int>(a);
  if (best < 0) throw std::logic_error("no legal action");
  return best;
}

/// TD error Q_p(s,a) - (r + gamma * max_a' Q_t(s',a')); terminal samples drop the bootstrap.
inline double td_delta(const Transition& t, const Mlp& policy, const Mlp& target, double gamma) {
  const double q = policy.predict(t.s)[static_cast<std::size_t>(t.a)];
  double y = t.r;
  if (!t.terminal) y += gamma * max_legal(target.predict(t.s_next), t.next_legal);
  return q - y;
}

inline std::vector<double> td_delta(std::span<const Transition* const> batch, const Mlp& policy, const Mlp& target,
                                    double gamma) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  std::vector<double> out;
  out.reserve(batch.size());
  for (const Transition* t : batch) out.push_back(td_delta(*t, policy, target, gamma));
  return out;
}

/// Mean squared TD error and its gradient with respect to the policy parameters.
inline double td_loss(std::span<const Transition* const> batch, const Mlp& policy, const Mlp& target, double gamma,
                      std::vector<double>* grad = nullptr, double* mean_abs_q = nullptr) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (grad) grad->assign(policy.params().size(), 0.0);
  const double n = double(batch.size());
  double loss = 0.0, abs_q = 0.0;
  std::vector<double> dy(policy.out(), 0.0);
  for (const Transition* t : batch) {
    const Mlp::Cache c = policy.forward(t->s);
    double y = t->r;
    if (!t->terminal) y += gamma * max_legal(target.predict(t->s_next), t->next_legal);
    const double delta = c.y[static_cast<std::size_t>(t->a)] - y;
    loss += delta * delta / n;
    for (double q : c.y) abs_q += std::abs(q) / (n * double(c.y.size()));
    if (grad) {
      std::fill(dy.begin(), dy.end(), 0.0);
      dy[static_cast<std::size_t>(t->a)] = 2.0 * delta / n;
      policy.backward(t->s, c, dy, *grad);
    }
  }
  if (mean_abs_q) *mean_abs_q = abs_q;
  return loss;
}

struct DqnConfig {
  std::size_t hidden = 64;
  double lr = 1e-2;
  double gamma = 0.95;
  std::size_t batch = 64;
  std::size_t capacity = 50000;
  int target_sync = 500;
  int episodes = 50000;
  std::size_t warmup = 1000;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_fraction = 0.5;
  int max_actions_per_turn = 4;
  double divergence_limit = 1e3;
  std::uint64_t seed = 1;

  double epsilon(int episode) const {
    const double horizon = eps_decay_fraction * episodes;
    if (horizon <= 0.0 || episode >= horizon) return eps_end;
    return eps_start + (eps_end - eps_start) * (double(episode) / horizon);
  }
};

inline nlohmann::json to_json(const DqnConfig& c) {
  return {{"hidden", c.hidden},           {"lr", c.lr},
          {"gamma", c.gamma},             {"batch", c.batch},
          {"capacity", c.capacity},       {"target_sync", c.target_sync},
          {"episodes", c.episodes},       {"warmup", c.warmup},
          {"eps_start", c.eps_start},     {"eps_end", c.eps_end},
          {"eps_decay_fraction", c.eps_decay_fraction},
          {"max_actions_per_turn", c.max_actions_per_turn},
          {"divergence_limit", c.divergence_limit},
          {"seed", c.seed}};
}

inline DqnConfig dqn_config_from_json(const nlohmann::json& j, DqnConfig c = {}) {
  c.hidden = j.value("hidden", c.hidden);
  c.lr = j.value("lr", c.lr);
  c.gamma = j.value("gamma", c.gamma);
  c.batch = j.value("batch", c.batch);
  c.capacity = j.value("capacity", c.capacity);
  c.target_sync = j.value("target_sync", c.target_sync);
  c.episodes = j.value("episodes", c.episodes);
  c.warmup = j.value("warmup", c.warmup);
  c.eps_start = j.value("eps_start", c.eps_start);
  c.eps_end = j.value("eps_end", c.eps_end);
  c.eps_decay_fraction = j.value("eps_decay_fraction", c.eps_decay_fraction);
  c.max_actions_per_turn = j.value("max_actions_per_turn", c.max_actions_per_turn);
  c.divergence_limit = j.value("divergence_limit", c.divergence_limit);
  c.seed = j.value("seed", c.seed);
  if (c.hidden == 0 || c.batch == 0 || c.episodes <= 0 || c.target_sync <= 0) throw std::invalid_argument("bad dqn config");
  return c;
}

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Policy and target networks with the Adam update and hard target sync.
class DqnLearner {
 public:
  DqnLearner(const DqnConfig& cfg, Rng& init_rng)
      : cfg_(cfg),
        policy_(Mlp::random(kStateSize, cfg.hidden, kNumDirectorActions, init_rng)),
        target_(policy_),
        adam_(policy_.params().size(), cfg.lr) {}

  DqnLearner(const DqnConfig& cfg, Mlp init) : cfg_(cfg), policy_(std::move(init)), target_(policy_), adam_(policy_.params().size(), cfg.lr) {}

  const Mlp& policy() const { return policy_; }
  const Mlp& target() const { return target_; }
  long updates() const { return updates_; }

  /// One Adam step on a minibatch; returns the loss before the step.
  double update(std::span<const Transition* const> batch) {
    std::vector<double> grad;
    double abs_q = 0.0;
    const double loss = td_loss(batch, policy_, target_, cfg_.gamma, &grad, &abs_q);
    if (!(abs_q <= cfg_.divergence_limit))
      throw DivergenceError("Q-values diverged (mean |Q| = " + std::to_string(abs_q) + ")");
    adam_.step(policy_.params(), grad);
    if (++updates_ % cfg_.target_sync == 0) target_ = policy_;
    return loss;
  }

 private:
  DqnConfig cfg_;
  Mlp policy_;
  Mlp target_;
  Adam adam_;
  long updates_ = 0;
};

/// Greedy director over a trained Q-network.
class LearnedDirector : public Director {
 public:
  explicit LearnedDirector(Mlp net, int max_actions_per_turn = 4) : net_(std::move(net)), cap_(max_actions_per_turn) {
    if (net_.in() != kStateSize || net_.out() != kNumDirectorActions) throw std::invalid_argument("weight shape mismatch");
  }
  std::string name() const override { return "dqn"; }
  const Mlp& net() const { return net_; }
  DirectorKind next(const DialogueState&, const DialogueState& now, int step, const Lexicon& lex) const override {
    LegalMask legal = legal_mask(now, lex);
    if (step >= cap_) legal = LegalMask{false, false, false, false, false, true};
    return kAllDirectorKinds[static_cast<std::size_t>(greedy_action(net_.predict(encode_state(now)), legal))];
  }

 private:
  Mlp net_;
  int cap_;
};

struct TrainLogRow {
  int episode = 0;
  double reward = 0.0;
  bool success = false;
  double epsilon = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  Mlp policy;
  std::vector<TrainLogRow> log;
  long updates = 0;
};

/// Turns the director decision points of one episode into transitions; the
/// next state of a step is the next decision point, the last one is terminal.
inline std::vector<Transition> transitions_of(const EpisodeRecord& rec) {
  std::vector<Transition> out;
  for (std::size_t i = 0; i < rec.steps.size(); ++i) {
    Transition t;
    t.s = rec.steps[i].s;
    t.a = rec.steps[i].action;
    const bool last = i + 1 == rec.steps.size();
    t.terminal = last;
    t.r = last ? rec.reward : 0.0;
    if (!last) {
      t.s_next = rec.steps[i + 1].s;
      t.next_legal = rec.steps[i + 1].legal;
    } else {
      t.s_next = rec.steps[i].s;
    }
    out.push_back(t);
  }
  return out;
}

/// Epsilon-greedy DQN training against the simulated matcher. Single-threaded and deterministic per seed.
inline TrainResult train(const DqnConfig& cfg, const MatcherProfile& profile, const std::vector<ColorContext>& contexts,
                         const Lexicon& lex, const RewardParams& rewards,
                         const std::function<void(const TrainLogRow&)>& progress = {}) {
  if (contexts.empty()) throw std::invalid_argument("no training contexts");
  Rng rng(cfg.seed);
  DqnLearner learner(cfg, rng);
  ReplayMemory memory(cfg.capacity);
  TrainResult result;
  EpisodeOptions opt;
  opt.max_actions_per_turn = cfg.max_actions_per_turn;
  opt.record_steps = true;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = cfg.epsilon(ep);
    const ColorContext& ctx = contexts[static_cast<std::size_t>(ep) % contexts.size()];
    const DirectorFn behave = [&](const DialogueState&, const DialogueState& now, int, const LegalMask& legal) {
      if (uniform01(rng) < eps) {
        std::vector<int> options;
        for (int a = 0; a < kNumDirectorActions; ++a)
          if (legal[static_cast<std::size_t>(a)]) options.push_back(a);
        return kAllDirectorKinds[static_cast<std::size_t>(options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)])];
      }
      return kAllDirectorKinds[static_cast<std::size_t>(greedy_action(learner.policy().predict(encode_state(now)), legal))];
    };
    Rng env_rng(derive_seed(cfg.seed ^ 0x5eedULL, static_cast<std::uint64_t>(ep)));
    const EpisodeRecord rec = run_episode(behave, profile, ctx, lex, env_rng, rewards, opt);
    double loss = 0.0;
    int n_updates = 0;
    for (auto& t : transitions_of(rec)) {
      memory.push(std::move(t));
      if (memory.size() >= std::max(cfg.warmup, cfg.batch)) {
        const auto batch = memory.sample(cfg.batch, rng);
        loss += learner.update(batch);
        ++n_updates;
      }
    }
    TrainLogRow row{ep, rec.reward, rec.success(), eps, n_updates ? loss / n_updates : 0.0};
    result.log.push_back(row);
    if (progress) progress(row);
  }
  result.policy = learner.policy();
  result.updates = learner.updates();
  return result;
}

// ---- artifacts -------------------------------------------------------------

inline constexpr int kWeightFormatVersion = 1;

inline nlohmann::json weights_to_json(const Mlp& net, std::uint64_t seed, const std::string& config_hash) {
  return {{"format", "cicrl-qnet"},
          {"version", kWeightFormatVersion},
          {"layers", {net.in(), net.hidden(), net.out()}},
          {"params", net.params()},
          {"seed", seed},
          {"config_hash", config_hash}};
}

inline Mlp weights_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "cicrl-qnet") throw std::invalid_argument("not a Q-network weight file");
  if (j.value("version", 0) != kWeightFormatVersion) throw std::invalid_argument("unsupported weight file version");
  const auto layers = j.at("layers").get<std::vector<std::size_t>>();
  if (layers.size() != 3) throw std::invalid_argument("weight file must describe 3 layer sizes");
  Mlp net(layers[0], layers[1], layers[2]);
  const auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != net.params().size()) throw std::invalid_argument("weight count does not match layer sizes");
  net.params() = params;
  for (double v : params)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite weight");
  return net;
}

inline Mlp load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open weight file " + path);
  return weights_from_json(nlohmann::json::parse(in));
}

inline std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream out;
  out << "episode,reward,success,epsilon,loss\n";
  out << std::setprecision(10);
  for (const auto& r : log) out << r.episode << ',' << r.reward << ',' << (r.success ? 1 : 0) << ',' << r.epsilon << ',' << r.loss << '\n';
  return out.str();
}

}  // namespace cicrl
