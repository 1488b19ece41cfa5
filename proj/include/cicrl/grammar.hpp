#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cicrl/lexicon.hpp"

namespace cicrl {

enum class Act { Describe, NegateDescription, AffirmTerm, NegateTerm, ClarifyTerm, ClarifyPatch, Select, EndTurn };
enum class Polarity { Positive, Negative };

inline std::string_view to_string(Act a) {
  switch (a) {
    case Act::Describe: return "Describe";
    case Act::NegateDescription: return "NegateDescription";
    case Act::AffirmTerm: return "AffirmTerm";
    case Act::NegateTerm: return "NegateTerm";
    case Act::ClarifyTerm: return "ClarifyTerm";
    case Act::ClarifyPatch: return "ClarifyPatch";
    case Act::Select: return "Select";
    case Act::EndTurn: return "EndTurn";
  }
  return "?";
}

inline Act act_from_string(std::string_view s) {
  for (Act a : {Act::Describe, Act::NegateDescription, Act::AffirmTerm, Act::NegateTerm, Act::ClarifyTerm,
                Act::ClarifyPatch, Act::Select, Act::EndTurn})
    if (to_string(a) == s) return a;
  throw std::invalid_argument("unknown act '" + std::string(s) + "'");
}

inline Polarity default_polarity(Act a) {
  return (a == Act::NegateDescription || a == Act::NegateTerm) ? Polarity::Negative : Polarity::Positive;
}

/// Structured meaning of one contribution. Terms are lexicon ids.
struct LogicalForm {
  Act act = Act::EndTurn;
  std::vector<std::string> terms;
  std::optional<int> patch;
  Polarity polarity = Polarity::Positive;

  static LogicalForm make(Act act, std::vector<std::string> terms = {}, std::optional<int> patch = {}) {
    return LogicalForm{act, std::move(terms), patch, default_polarity(act)};
  }

  friend bool operator==(const LogicalForm&, const LogicalForm&) = default;
};

inline bool carries_terms(Act a) {
  return a == Act::Describe || a == Act::NegateDescription || a == Act::AffirmTerm || a == Act::NegateTerm ||
         a == Act::ClarifyTerm;
}

inline void validate(const LogicalForm& lf) {
  if (carries_terms(lf.act) && lf.terms.empty())
    throw std::invalid_argument(std::string(to_string(lf.act)) + " needs at least one term");
  if (lf.act == Act::Select || lf.act == Act::ClarifyPatch) {
    if (!lf.patch || *lf.patch < 0 || *lf.patch > 2)
      throw std::invalid_argument(std::string(to_string(lf.act)) + " needs a patch index in {0,1,2}");
  }
}

inline nlohmann::json to_json(const LogicalForm& lf) {
  nlohmann::json j{{"act", to_string(lf.act)},
                   {"terms", lf.terms},
                   {"polarity", lf.polarity == Polarity::Positive ? "positive" : "negative"}};
  j["patch"] = lf.patch ? nlohmann::json(*lf.patch) : nlohmann::json(nullptr);
  return j;
}

inline LogicalForm logical_form_from_json(const nlohmann::json& j) {
  LogicalForm lf;
  lf.act = act_from_string(j.at("act").get<std::string>());
  lf.terms = j.value("terms", std::vector<std::string>{});
  if (j.contains("patch") && !j["patch"].is_null()) lf.patch = j["patch"].get<int>();
  lf.polarity = j.value("polarity", std::string("positive")) == "negative" ? Polarity::Negative : Polarity::Positive;
  return lf;
}

// ---- grammar ---------------------------------------------------------------

struct GrammarRule {
  std::string lhs;
  std::vector<std::string> rhs;
  double p = 1.0;
};

/// Probabilistic CFG over the matcher/director utterance fragment.
///
/// Right-hand-side symbols are nonterminals (anything that appears as a lhs),
/// the slots `@term` (any lexicon label) and `@ordinal` (any ordinal word),
/// or literal lowercase words.
class Grammar {
 public:
  static constexpr const char* kTermSlot = "@term";
  static constexpr const char* kOrdinalSlot = "@ordinal";

  Grammar(std::vector<GrammarRule> rules, std::string start, std::map<std::string, std::string> aliases,
          std::map<std::string, int> ordinals, std::map<std::string, Act> acts)
      : rules_(std::move(rules)),
        start_(std::move(start)),
        aliases_(std::move(aliases)),
        ordinals_(std::move(ordinals)),
        acts_(std::move(acts)) {
    check();
  }

  static Grammar from_json(const nlohmann::json& j) {
    std::vector<GrammarRule> rules;
    for (const auto& r : j.at("rules"))
      rules.push_back({r.at("lhs").get<std::string>(), r.at("rhs").get<std::vector<std::string>>(),
                       r.at("p").get<double>()});
    std::map<std::string, Act> acts;
    for (const auto& [nt, name] : j.at("acts").items()) acts[nt] = act_from_string(name.get<std::string>());
    return Grammar(std::move(rules), j.at("start").get<std::string>(),
                   j.value("aliases", std::map<std::string, std::string>{}),
                   j.value("ordinals", std::map<std::string, int>{}), std::move(acts));
  }

  static Grammar load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open grammar file " + path);
    return from_json(nlohmann::json::parse(in));
  }

  const std::vector<GrammarRule>& rules() const { return rules_; }
  const std::string& start() const { return start_; }
  const std::map<std::string, std::string>& aliases() const { return aliases_; }
  const std::map<std::string, int>& ordinals() const { return ordinals_; }
  const std::map<std::string, Act>& acts() const { return acts_; }
  bool is_nonterminal(const std::string& s) const { return nonterminals_.count(s) > 0; }

  /// Literal words used anywhere in rule bodies.
  std::set<std::string> terminal_words() const {
    std::set<std::string> out;
    for (const auto& r : rules_)
      for (const auto& s : r.rhs)
        if (!is_nonterminal(s) && s != kTermSlot && s != kOrdinalSlot) out.insert(s);
    return out;
  }

 private:
  void check() {
    if (rules_.empty()) throw std::invalid_argument("grammar has no rules");
    for (const auto& r : rules_) nonterminals_.insert(r.lhs);
    if (!is_nonterminal(start_)) throw std::invalid_argument("start symbol '" + start_ + "' has no rules");
    std::map<std::string, double> mass;
    for (const auto& r : rules_) {
      if (r.rhs.empty()) throw std::invalid_argument("empty rule body for " + r.lhs);
      if (!(r.p > 0.0 && r.p <= 1.0)) throw std::invalid_argument("rule probability out of (0,1] for " + r.lhs);
      mass[r.lhs] += r.p;
    }
    for (const auto& [nt, m] : mass)
      if (std::abs(m - 1.0) > 1e-9)
        throw std::invalid_argument("rule probabilities for '" + nt + "' sum to " + std::to_string(m));
    for (const auto& [nt, act] : acts_)
      if (!is_nonterminal(nt)) throw std::invalid_argument("act mapping names unknown nonterminal " + nt);
    // unary chains between nonterminals must be acyclic
    std::map<std::string, std::vector<std::string>> unary;
    for (const auto& r : rules_)
      if (r.rhs.size() == 1 && is_nonterminal(r.rhs[0])) unary[r.lhs].push_back(r.rhs[0]);
    std::map<std::string, int> mark;
    std::function<void(const std::string&)> visit = [&](const std::string& n) {
      if (mark[n] == 1) throw std::invalid_argument("unary rule cycle through " + n);
      if (mark[n] == 2) return;
      mark[n] = 1;
      for (const auto& m : unary[n]) visit(m);
      mark[n] = 2;
    };
    for (const auto& nt : nonterminals_) visit(nt);
    // the term slot must be reachable from the start symbol
    std::set<std::string> seen{start_};
    std::vector<std::string> stack{start_};
    bool term_reachable = false;
    while (!stack.empty()) {
      const std::string n = stack.back();
      stack.pop_back();
      for (const auto& r : rules_) {
        if (r.lhs != n) continue;
        for (const auto& s : r.rhs) {
          if (s == kTermSlot) term_reachable = true;
          if (is_nonterminal(s) && seen.insert(s).second) stack.push_back(s);
        }
      }
    }
    if (!term_reachable) throw std::invalid_argument("grammar never derives a lexicon term");
  }

  std::vector<GrammarRule> rules_;
  std::string start_;
  std::map<std::string, std::string> aliases_;
  std::map<std::string, int> ordinals_;
  std::map<std::string, Act> acts_;
  std::set<std::string> nonterminals_;
};

// ---- tokenizer -------------------------------------------------------------

struct Token {
  std::string text;
  int term = -1;  // lexicon index when the token is a (possibly multi-word) label
};

/// Lowercases, strips punctuation, applies word aliases, then greedily merges
/// the longest run of words that forms a lexicon label.
inline std::vector<Token> tokenize(const std::string& utterance, const Grammar& grammar, const Lexicon& lex) {
  std::string cleaned;
  for (char ch : utterance) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) cleaned += static_cast<char>(std::tolower(c));
    else if (ch == '\'') continue;
    else cleaned += ' ';
  }
  std::vector<std::string> words;
  std::string w;
  for (char c : cleaned + " ") {
    if (c == ' ') {
      if (!w.empty()) {
        auto it = grammar.aliases().find(w);
        words.push_back(it == grammar.aliases().end() ? w : it->second);
        w.clear();
      }
    } else {
      w += c;
    }
  }
  std::size_t max_words = 1;
  for (const auto& t : lex.terms())
    max_words = std::max<std::size_t>(max_words, 1 + static_cast<std::size_t>(std::count(t.label.begin(), t.label.end(), ' ')));
  std::vector<Token> out;
  for (std::size_t i = 0; i < words.size();) {
    bool merged = false;
    for (std::size_t n = std::min(max_words, words.size() - i); n >= 1; --n) {
      std::string cand = words[i];
      for (std::size_t k = 1; k < n; ++k) cand += " " + words[i + k];
      const int idx = lex.index_of_label(cand);
      if (idx >= 0) {
        out.push_back({cand, idx});
        i += n;
        merged = true;
        break;
      }
    }
    if (!merged) out.push_back({words[i++], -1});
  }
  return out;
}

// ---- parser ----------------------------------------------------------------

struct ParseResult {
  LogicalForm lf;
  double probability = 0.0;
};

/// CKY chart parser over a binarized copy of the grammar, bound to a lexicon.
class Parser {
 public:
  static constexpr std::size_t kMaxDerivationsPerCell = 64;

  Parser(Grammar grammar, const Lexicon& lexicon) : grammar_(std::move(grammar)), lex_(&lexicon) {
    const auto words = grammar_.terminal_words();
    for (const auto& t : lexicon.terms()) {
      if (words.count(t.label) || grammar_.ordinals().count(t.label))
        throw std::invalid_argument("lexicon label '" + t.label + "' collides with a grammar word");
    }
    binarize();
  }

  const Grammar& grammar() const { return grammar_; }
  const Lexicon& lexicon() const { return *lex_; }

  /// All complete parses mapped to logical forms, best first. Unknown tokens yield an empty list.
  std::vector<ParseResult> parse(const std::string& utterance) const {
    const auto tokens = tokenize(utterance, grammar_, *lex_);
    if (tokens.empty()) return {};
    const std::size_t n = tokens.size();
    chart_t chart(n * (n + 1));
    auto cell = [&](std::size_t i, std::size_t j) -> cell_t& { return chart[i * (n + 1) + j]; };

    // leaves
    for (std::size_t i = 0; i < n; ++i) {
      cell_t& c = cell(i, i + 1);
      const Token& tok = tokens[i];
      bool known = false;
      if (tok.term >= 0) {
        add(c, symbol_id(Grammar::kTermSlot), Deriv{1.0 / static_cast<double>(lex_->size()), -1, 0, 0, 0, static_cast<int>(i)});
        known = true;
      }
      if (grammar_.ordinals().count(tok.text)) {
        add(c, symbol_id(Grammar::kOrdinalSlot), Deriv{1.0, -1, 0, 0, 0, static_cast<int>(i)});
        known = true;
      }
      auto it = word_symbol_.find(tok.text);
      if (it != word_symbol_.end()) {
        add(c, it->second, Deriv{1.0, -1, 0, 0, 0, static_cast<int>(i)});
        known = true;
      }
      if (!known) return {};
      close_unary(c);
    }
    // spans
    for (std::size_t len = 2; len <= n; ++len) {
      for (std::size_t i = 0; i + len <= n; ++i) {
        const std::size_t j = i + len;
        cell_t& c = cell(i, j);
        for (std::size_t k = i + 1; k < j; ++k) {
          const cell_t& left = cell(i, k);
          const cell_t& right = cell(k, j);
          for (std::size_t r = 0; r < brules_.size(); ++r) {
            const BRule& br = brules_[r];
            if (br.rhs.size() != 2) continue;
            auto li = left.find(br.rhs[0]);
            if (li == left.end()) continue;
            auto ri = right.find(br.rhs[1]);
            if (ri == right.end()) continue;
            for (std::size_t a = 0; a < li->second.size(); ++a)
              for (std::size_t b = 0; b < ri->second.size(); ++b)
                add(c, br.lhs,
                    Deriv{br.p * li->second[a].p * ri->second[b].p, static_cast<int>(r), static_cast<int>(k),
                          static_cast<int>(a), static_cast<int>(b), -1});
          }
        }
        close_unary(c);
      }
    }
    const cell_t& top = cell(0, n);
    auto st = top.find(symbol_id(grammar_.start()));
    if (st == top.end()) return {};

    struct Candidate {
      LogicalForm lf;
      double p;
      std::vector<int> order;
    };
    std::vector<Candidate> cands;
    for (std::size_t d = 0; d < st->second.size(); ++d) {
      Candidate cand{{}, st->second[d].p, {}};
      Collected col;
      walk(chart, n, tokens, 0, n, symbol_id(grammar_.start()), d, col, cand.order);
      if (!col.act) continue;
      cand.lf.act = *col.act;
      cand.lf.terms = col.terms;
      cand.lf.patch = col.patch;
      cand.lf.polarity = default_polarity(*col.act);
      try {
        validate(cand.lf);
      } catch (const std::invalid_argument&) {
        continue;
      }
      cands.push_back(std::move(cand));
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.p != b.p) return a.p > b.p;
      return a.order < b.order;
    });
    std::vector<ParseResult> out;
    for (auto& c : cands) {
      const bool dup = std::any_of(out.begin(), out.end(), [&](const ParseResult& r) { return r.lf == c.lf; });
      if (!dup) out.push_back({std::move(c.lf), c.p});
    }
    return out;
  }

 private:
  struct BRule {
    int lhs;
    std::vector<int> rhs;  // 1 or 2 symbols
    double p;
    int source;  // index of the originating grammar rule
  };
  struct Deriv {
    double p;
    int rule;  // -1 for a leaf
    int split;
    int left;   // derivation index of first child
    int right;  // derivation index of second child
    int token;  // leaf token index
  };
  using cell_t = std::unordered_map<int, std::vector<Deriv>>;
  using chart_t = std::vector<cell_t>;
  struct Collected {
    std::optional<Act> act;
    std::vector<std::string> terms;
    std::optional<int> patch;
  };

  int symbol_id(const std::string& s) const {
    auto it = ids_.find(s);
    if (it == ids_.end()) return -1;
    return it->second;
  }
  int intern(const std::string& s) {
    auto [it, inserted] = ids_.emplace(s, static_cast<int>(names_.size()));
    if (inserted) names_.push_back(s);
    return it->second;
  }

  void binarize() {
    intern(Grammar::kTermSlot);
    intern(Grammar::kOrdinalSlot);
    const auto& rules = grammar_.rules();
    auto symbol_for = [&](const std::string& s) -> int {
      if (grammar_.is_nonterminal(s) || s == Grammar::kTermSlot || s == Grammar::kOrdinalSlot) return intern(s);
      // literal word: a preterminal that rewrites to the word itself
      auto it = word_symbol_.find(s);
      if (it != word_symbol_.end()) return it->second;
      const int id = intern("'" + s);
      word_symbol_[s] = id;
      return id;
    };
    for (std::size_t r = 0; r < rules.size(); ++r) {
      const auto& rule = rules[r];
      std::vector<int> rhs;
      for (const auto& s : rule.rhs) rhs.push_back(symbol_for(s));
      int lhs = intern(rule.lhs);
      double p = rule.p;
      // A -> X1 X2 ... Xn becomes A -> X1 A#r.1, A#r.1 -> X2 A#r.2, ...
      for (std::size_t k = 0; rhs.size() - k > 2; ++k) {
        const int rest = intern(rule.lhs + "#" + std::to_string(r) + "." + std::to_string(k + 1));
        brules_.push_back({lhs, {rhs[k], rest}, p, static_cast<int>(r)});
        lhs = rest;
        p = 1.0;
        if (rhs.size() - k - 1 == 2) {
          brules_.push_back({lhs, {rhs[k + 1], rhs[k + 2]}, 1.0, static_cast<int>(r)});
          break;
        }
      }
      if (rhs.size() <= 2) brules_.push_back({lhs, rhs, p, static_cast<int>(r)});
    }
  }

  void add(cell_t& c, int sym, Deriv d) const {
    // children are referenced by index, so a full cell drops new derivations instead of reordering
    auto& v = c[sym];
    if (v.size() < kMaxDerivationsPerCell) v.push_back(d);
  }

  // Unary rules are acyclic (checked at grammar load), so a bounded number of passes reaches closure.
  void close_unary(cell_t& c) const {
    std::map<std::pair<int, int>, std::size_t> applied;  // (rule, child derivation count) handled
    for (std::size_t pass = 0; pass <= names_.size(); ++pass) {
      bool changed = false;
      for (std::size_t r = 0; r < brules_.size(); ++r) {
        const BRule& br = brules_[r];
        if (br.rhs.size() != 1) continue;
        auto it = c.find(br.rhs[0]);
        if (it == c.end()) continue;
        const std::size_t count = it->second.size();
        std::size_t& done = applied[{static_cast<int>(r), 0}];
        for (std::size_t d = done; d < count; ++d) {
          const double p = br.p * c[br.rhs[0]][d].p;
          add(c, br.lhs, Deriv{p, static_cast<int>(r), -1, static_cast<int>(d), -1, -1});
          changed = true;
        }
        done = count;
      }
      if (!changed) break;
    }
  }

  void walk(const chart_t& chart, std::size_t n, const std::vector<Token>& tokens, std::size_t i, std::size_t j,
            int sym, std::size_t d, Collected& col, std::vector<int>& order) const {
    const cell_t& c = chart[i * (n + 1) + j];
    const Deriv& dv = c.at(sym)[d];
    const std::string& name = names_[static_cast<std::size_t>(sym)];
    if (!col.act) {
      auto it = grammar_.acts().find(name);
      if (it != grammar_.acts().end()) col.act = it->second;
    }
    if (dv.rule < 0) {
      const Token& tok = tokens[static_cast<std::size_t>(dv.token)];
      if (name == Grammar::kTermSlot) col.terms.push_back((*lex_)[static_cast<std::size_t>(tok.term)].id);
      if (name == Grammar::kOrdinalSlot) col.patch = grammar_.ordinals().at(tok.text);
      return;
    }
    const BRule& br = brules_[static_cast<std::size_t>(dv.rule)];
    order.push_back(br.source);
    if (br.rhs.size() == 1) {
      walk(chart, n, tokens, i, j, br.rhs[0], static_cast<std::size_t>(dv.left), col, order);
    } else {
      const auto k = static_cast<std::size_t>(dv.split);
      walk(chart, n, tokens, i, k, br.rhs[0], static_cast<std::size_t>(dv.left), col, order);
      walk(chart, n, tokens, k, j, br.rhs[1], static_cast<std::size_t>(dv.right), col, order);
    }
  }

  Grammar grammar_;
  const Lexicon* lex_;
  std::vector<BRule> brules_;
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> word_symbol_;
};

// ---- realization -----------------------------------------------------------

inline std::string ordinal_word(int patch) {
  static constexpr const char* kWords[] = {"first", "second", "third"};
  if (patch < 0 || patch > 2) throw std::invalid_argument("patch index out of range");
  return kWords[patch];
}

/// Deterministic template text for a logical form.
inline std::string realize(const LogicalForm& lf, const Lexicon& lex) {
  validate(lf);
  auto label = [&](const std::string& id) {
    const int i = lex.index_of_id(id);
    if (i < 0) throw std::invalid_argument("unknown term id '" + id + "'");
    return lex[static_cast<std::size_t>(i)].label;
  };
  std::string terms;
  for (std::size_t k = 0; k < lf.terms.size(); ++k) terms += (k ? " and " : "") + label(lf.terms[k]);
  switch (lf.act) {
    case Act::Describe: return "the " + terms + " one";
    case Act::NegateDescription: return "not the " + terms + " one";
    case Act::AffirmTerm: return "yes, " + terms;
    case Act::NegateTerm: return "no, not " + terms;
    case Act::ClarifyTerm: return "is it the " + terms + " one?";
    case Act::ClarifyPatch: return "is it the " + ordinal_word(*lf.patch) + " one?";
    case Act::Select: return "i pick the " + ordinal_word(*lf.patch) + " one";
    case Act::EndTurn: return "";
  }
  return "";
}

}  // namespace cicrl
