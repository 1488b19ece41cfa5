#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cicrl/color.hpp"
#include "cicrl/common.hpp"
#include "cicrl/grammar.hpp"
#include "cicrl/lexicon.hpp"

namespace cicrl {

enum class Role { Director = 0, Matcher = 1 };
enum class Relation { Elaboration, Contrast, QuestionAnswerPair, Acknowledge };

inline std::string_view to_string(Role r) { return r == Role::Director ? "director" : "matcher"; }

inline std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::Elaboration: return "Elaboration";
    case Relation::Contrast: return "Contrast";
    case Relation::QuestionAnswerPair: return "QuestionAnswerPair";
    case Relation::Acknowledge: return "Acknowledge";
  }
  return "?";
}

/// Slots of the action-history bit set: six director kinds, then Select and Clarify.
inline constexpr int kNumActionFlags = 8;
inline constexpr int kSelectFlag = 6;
inline constexpr int kClarifyFlag = 7;

struct UtteranceNode {
  int id = 0;
  LogicalForm lf;
  Role speaker = Role::Director;
  std::optional<Dist3> distribution;
  int turn_index = 0;
};

struct Edge {
  int child = 0;
  int parent = 0;
  Relation relation = Relation::Elaboration;
};

/// Attachment tree of contributions. New nodes always attach to the most
/// recent node, so the tree is a single chain.
class CoherenceGraph {
 public:
  const std::vector<UtteranceNode>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const UtteranceNode& back() const { return nodes_.back(); }

  int add(UtteranceNode node, std::optional<Relation> relation) {
    node.id = static_cast<int>(nodes_.size());
    if (!nodes_.empty()) {
      if (!relation) throw std::invalid_argument("non-root node needs a relation");
      edges_.push_back({node.id, node.id - 1, *relation});
    }
    nodes_.push_back(std::move(node));
    return nodes_.back().id;
  }

  std::optional<int> parent(int id) const {
    for (const auto& e : edges_)
      if (e.child == id) return e.parent;
    return std::nullopt;
  }

  /// Node ids from `leaf` up to the root.
  std::vector<int> chain(int leaf) const {
    std::vector<int> out;
    for (std::optional<int> cur = leaf; cur; cur = parent(*cur)) out.push_back(*cur);
    return out;
  }

  /// Tree check: one parent per non-root node, parents precede children.
  bool is_tree() const {
    std::vector<int> parents(nodes_.size(), 0);
    for (const auto& e : edges_) {
      if (e.child < 0 || e.child >= static_cast<int>(nodes_.size())) return false;
      if (e.parent < 0 || e.parent >= e.child) return false;
      ++parents[static_cast<std::size_t>(e.child)];
    }
    for (std::size_t i = 0; i < parents.size(); ++i)
      if (parents[i] != (i == 0 ? 0 : 1)) return false;
    return true;
  }

 private:
  std::vector<UtteranceNode> nodes_;
  std::vector<Edge> edges_;
};

inline Dist3 combine(const Dist3& posterior, const Dist3& factor) {
  return normalize({posterior[0] * factor[0], posterior[1] * factor[1], posterior[2] * factor[2]});
}

/// Product of the node distributions along the chain ending at the last node, uniform prior.
inline Dist3 batch_posterior(const CoherenceGraph& g) {
  Dist3 acc{1.0, 1.0, 1.0};
  if (g.empty()) return kUniform3;
  for (int id : g.chain(g.back().id)) {
    const auto& d = g.nodes()[static_cast<std::size_t>(id)].distribution;
    if (!d) continue;
    for (int i = 0; i < 3; ++i) acc[i] *= (*d)[i];
    acc = normalize(acc);
  }
  return normalize(acc);
}

/// Listener distribution for a grounding-bearing logical form, or nothing.
inline std::optional<Dist3> grounding_distribution(const LogicalForm& lf, const ColorContext& ctx,
                                                   const Lexicon& lex) {
  if (lf.act != Act::Describe && lf.act != Act::NegateDescription && lf.act != Act::AffirmTerm &&
      lf.act != Act::NegateTerm)
    return std::nullopt;
  const bool negated = lf.polarity == Polarity::Negative;
  Dist3 d{1.0, 1.0, 1.0};
  for (const auto& id : lf.terms) {
    const int t = lex.index_of_id(id);
    if (t < 0) throw std::invalid_argument("unknown term id '" + id + "'");
    d = combine(d, listener(lex[static_cast<std::size_t>(t)], ctx, negated));
  }
  return d;
}

/// Immutable dialogue state; `attach` and `end_turn` return new values.
class DialogueState {
 public:
  DialogueState() = default;
  explicit DialogueState(ColorContext ctx) : context_(std::move(ctx)) {}

  const CoherenceGraph& graph() const { return graph_; }
  const Dist3& posterior() const { return posterior_; }
  const ColorContext& context() const { return context_; }
  int term_count() const { return term_count_; }
  int l_conv() const { return static_cast<int>(graph_.size()); }
  Role pt() const { return pt_; }
  Role to_move() const { return to_move_; }
  int turn_index() const { return turn_index_; }
  const std::optional<LogicalForm>& pending_clarification() const { return pending_; }
  const std::array<bool, kNumActionFlags>& action_history() const { return flags_; }
  std::optional<int> selected() const { return selected_; }
  bool closed() const { return selected_.has_value(); }
  int clarifications() const { return clarifications_; }

  std::vector<std::string> director_terms() const {
    std::vector<std::string> out;
    for (const auto& n : graph_.nodes())
      if (n.speaker == Role::Director) out.insert(out.end(), n.lf.terms.begin(), n.lf.terms.end());
    return out;
  }

  DialogueState with_flag(int slot) const {
    DialogueState s = *this;
    s.flags_.at(static_cast<std::size_t>(slot)) = true;
    return s;
  }

  /// Appends a contribution to the chain and updates the posterior and counters.
  DialogueState attach(const LogicalForm& lf, Role speaker, const Lexicon& lex) const {
    validate(lf);
    if (closed()) throw std::logic_error("cannot attach after Select");
    if (lf.act == Act::EndTurn) throw std::invalid_argument("EndTurn is not attached; use end_turn");
    const bool answer = lf.act == Act::AffirmTerm || lf.act == Act::NegateTerm;
    if (answer && !pending_) throw std::logic_error("clarification answer without a pending clarification");

    DialogueState s = *this;
    std::optional<Relation> rel;
    if (!graph_.empty()) {
      const UtteranceNode& prev = graph_.back();
      if (lf.act == Act::Select) rel = Relation::Acknowledge;
      else if (lf.act == Act::ClarifyTerm || lf.act == Act::ClarifyPatch) rel = Relation::QuestionAnswerPair;
      else if (speaker == Role::Director && pending_) rel = Relation::QuestionAnswerPair;
      else if (lf.act == Act::NegateDescription || lf.act == Act::NegateTerm) rel = Relation::Contrast;
      else if (prev.speaker == speaker) rel = Relation::Elaboration;
      else rel = Relation::Acknowledge;
    }
    UtteranceNode node;
    node.lf = lf;
    node.speaker = speaker;
    node.turn_index = turn_index_;
    node.distribution = grounding_distribution(lf, context_, lex);
    if (node.distribution) s.posterior_ = combine(posterior_, *node.distribution);
    s.graph_.add(std::move(node), rel);

    if (speaker == Role::Director && node_has_terms(lf)) ++s.term_count_;
    if (speaker == Role::Director && pending_) s.pending_.reset();
    if (lf.act == Act::ClarifyTerm || lf.act == Act::ClarifyPatch) {
      s.pending_ = lf;
      ++s.clarifications_;
      s.flags_[kClarifyFlag] = true;
    }
    if (lf.act == Act::Select) {
      s.selected_ = *lf.patch;
      s.flags_[kSelectFlag] = true;
    }
    s.pt_ = speaker;
    return s;
  }

  /// Hands the floor to the other role. A director ending its turn drops any unanswered clarification.
  DialogueState end_turn(Role speaker) const {
    if (closed()) throw std::logic_error("dialogue is closed");
    if (speaker != to_move_) throw std::logic_error("end_turn by the role not holding the floor");
    DialogueState s = *this;
    if (speaker == Role::Director) s.pending_.reset();
    s.to_move_ = speaker == Role::Director ? Role::Matcher : Role::Director;
    ++s.turn_index_;
    return s;
  }

  /// Recomputes the posterior from the node distributions.
  Dist3 recomputed_posterior() const { return batch_posterior(graph_); }

 private:
  static bool node_has_terms(const LogicalForm& lf) {
    return (lf.act == Act::Describe || lf.act == Act::NegateDescription || lf.act == Act::AffirmTerm ||
            lf.act == Act::NegateTerm) &&
           !lf.terms.empty();
  }

  CoherenceGraph graph_;
  Dist3 posterior_ = kUniform3;
  ColorContext context_;
  int term_count_ = 0;
  Role pt_ = Role::Director;
  Role to_move_ = Role::Director;
  int turn_index_ = 0;
  std::optional<LogicalForm> pending_;
  std::array<bool, kNumActionFlags> flags_{};
  std::optional<int> selected_;
  int clarifications_ = 0;
};

inline nlohmann::json to_json(const Dist3& d) { return nlohmann::json::array({d[0], d[1], d[2]}); }

/// Snapshot of a state. With `reveal` false the target, the posterior and
/// per-node distributions are left out.
inline nlohmann::json to_json(const DialogueState& s, bool reveal = true) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : s.graph().nodes()) {
    nlohmann::json jn{{"id", n.id},
                      {"lf", to_json(n.lf)},
                      {"speaker", to_string(n.speaker)},
                      {"turn_index", n.turn_index}};
    if (reveal && n.distribution) jn["distribution"] = to_json(*n.distribution);
    nodes.push_back(std::move(jn));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : s.graph().edges())
    edges.push_back({{"child", e.child}, {"parent", e.parent}, {"relation", to_string(e.relation)}});
  nlohmann::json patches = nlohmann::json::array();
  for (const auto& c : s.context().patches) patches.push_back({c.rgb()[0], c.rgb()[1], c.rgb()[2]});
  nlohmann::json flags = nlohmann::json::array();
  for (bool f : s.action_history()) flags.push_back(f ? 1 : 0);
  nlohmann::json j{{"graph", {{"nodes", nodes}, {"edges", edges}}},
                   {"patches", patches},
                   {"condition", to_string(s.context().condition)},
                   {"term_count", s.term_count()},
                   {"l_conv", s.l_conv()},
                   {"pt", to_string(s.pt())},
                   {"to_move", to_string(s.to_move())},
                   {"turn_index", s.turn_index()},
                   {"clarifications", s.clarifications()},
                   {"action_history", flags}};
  j["pending_clarification"] = s.pending_clarification() ? to_json(*s.pending_clarification()) : nlohmann::json(nullptr);
  if (reveal) {
    j["posterior"] = to_json(s.posterior());
    j["target"] = s.context().target_index;
  }
  if (s.selected()) j["selected"] = *s.selected();
  return j;
}

}  // namespace cicrl
