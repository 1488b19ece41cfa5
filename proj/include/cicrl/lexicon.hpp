#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "cicrl/color.hpp"
#include "cicrl/common.hpp"

namespace cicrl {

/// A color term with a Gaussian category in CIELAB.
struct Term {
  std::string id;
  std::string label;
  Lab center{};
  std::array<double, 3> spread{1.0, 1.0, 1.0};
};

/// Degree in [0,1] to which a term describes a color.
inline double applicability(const Term& term, const Color& color) {
  double e = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double z = (color.lab()[k] - term.center[k]) / term.spread[k];
    e += z * z;
  }
  return std::exp(-0.5 * e);
}

/// Immutable set of terms; this is the default (and swappable) semantic model.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::vector<Term> terms) : terms_(std::move(terms)) {
    if (terms_.empty()) throw std::invalid_argument("lexicon is empty");
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const Term& t = terms_[i];
      for (double s : t.spread)
        if (!(s > 0.0)) throw std::invalid_argument("term '" + t.id + "' has non-positive spread");
      if (!by_id_.emplace(t.id, i).second) throw std::invalid_argument("duplicate term id '" + t.id + "'");
      if (!by_label_.emplace(t.label, i).second)
        throw std::invalid_argument("duplicate term label '" + t.label + "'");
    }
  }

  static Lexicon from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw std::invalid_argument("lexicon file must be a JSON array");
    std::vector<Term> terms;
    for (const auto& e : j) {
      Term t;
      t.id = e.at("id").get<std::string>();
      t.label = e.at("label").get<std::string>();
      const auto c = e.at("center").get<std::vector<double>>();
      const auto s = e.at("spread").get<std::vector<double>>();
      if (c.size() != 3 || s.size() != 3) throw std::invalid_argument("center/spread must have 3 entries");
      std::copy(c.begin(), c.end(), t.center.begin());
      std::copy(s.begin(), s.end(), t.spread.begin());
      terms.push_back(std::move(t));
    }
    return Lexicon(std::move(terms));
  }

  static Lexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open lexicon file " + path);
    return from_json(nlohmann::json::parse(in));
  }

  std::size_t size() const { return terms_.size(); }
  const Term& operator[](std::size_t i) const { return terms_[i]; }
  const std::vector<Term>& terms() const { return terms_; }

  int index_of_id(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? -1 : static_cast<int>(it->second);
  }
  int index_of_label(const std::string& label) const {
    auto it = by_label_.find(label);
    return it == by_label_.end() ? -1 : static_cast<int>(it->second);
  }

 private:
  std::vector<Term> terms_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> by_label_;
};

/// Applicability of every term to each of the three patches, row-major [term][patch].
class ApplicabilityTable {
 public:
  ApplicabilityTable(const Lexicon& lex, const Patches& patches) : values_(lex.size()) {
    for (std::size_t t = 0; t < lex.size(); ++t)
      for (std::size_t p = 0; p < 3; ++p) values_[t][p] = applicability(lex[t], patches[p]);
  }
  const std::array<double, 3>& row(std::size_t term) const { return values_[term]; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<std::array<double, 3>> values_;
};

/// Conservative speaker scores: applicability to the target times the
/// complement of applicability to every distractor (unnormalized).
inline std::vector<double> speaker_scores(const Lexicon& lex, const Color& target,
                                          std::span<const Color> distractors) {
  std::vector<double> s(lex.size());
  for (std::size_t t = 0; t < lex.size(); ++t) {
    double v = applicability(lex[t], target);
    for (const Color& d : distractors) v *= 1.0 - applicability(lex[t], d);
    s[t] = v;
  }
  return s;
}

inline std::vector<double> speaker_scores(const ApplicabilityTable& table, int target) {
  std::vector<double> s(table.size());
  for (std::size_t t = 0; t < table.size(); ++t) {
    const auto& a = table.row(t);
    double v = a[static_cast<std::size_t>(target)];
    for (int d = 0; d < 3; ++d)
      if (d != target) v *= 1.0 - a[static_cast<std::size_t>(d)];
    s[t] = v;
  }
  return s;
}

inline std::vector<double> normalize_scores(std::vector<double> s) {
  double total = 0.0;
  for (double v : s) total += v;
  if (!(total > 0.0)) {
    std::fill(s.begin(), s.end(), 1.0 / static_cast<double>(s.size()));
    return s;
  }
  for (double& v : s) v /= total;
  return s;
}

/// P(w | target, context) for the conservative speaker.
inline std::vector<double> speaker(const Lexicon& lex, const ColorContext& ctx, int target) {
  std::vector<Color> distractors;
  for (int i = 0; i < 3; ++i)
    if (i != target) distractors.push_back(ctx.patches[static_cast<std::size_t>(i)]);
  return normalize_scores(speaker_scores(lex, ctx.patches[static_cast<std::size_t>(target)], distractors));
}

/// Highest-scoring index not in `excluded`; ties go to the lower index. Returns -1 if all excluded.
inline int argmax_excluding(const std::vector<double>& scores, const std::unordered_set<int>& excluded) {
  int best = -1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (excluded.count(static_cast<int>(i))) continue;
    if (best < 0 || scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

/// Literal listener over the patches from a row of applicabilities.
inline Dist3 listener_from_applicability(const std::array<double, 3>& a, bool negated) {
  if (!negated) return normalize(a);
  return normalize({1.0 - a[0], 1.0 - a[1], 1.0 - a[2]});
}

/// P(x_i | term) for the literal listener; negation uses the complement.
inline Dist3 listener(const Term& term, const ColorContext& ctx, bool negated) {
  std::array<double, 3> a{};
  for (std::size_t i = 0; i < 3; ++i) a[i] = applicability(term, ctx.patches[i]);
  return listener_from_applicability(a, negated);
}

}  // namespace cicrl
