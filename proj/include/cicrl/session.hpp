#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "cicrl/dqn.hpp"
#include "cicrl/experiment.hpp"
#include "cicrl/grammar.hpp"

namespace cicrl {

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

enum class SessionStatus { AwaitingMatcher, AwaitingDirector, Closed };

inline std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::AwaitingMatcher: return "awaiting_matcher";
    case SessionStatus::AwaitingDirector: return "awaiting_director";
    case SessionStatus::Closed: return "closed";
  }
  return "?";
}

struct TranscriptEntry {
  Role speaker = Role::Director;
  std::string text;
  LogicalForm lf;
};

struct Session {
  std::string id;
  DialogueState state;
  std::string policy;
  std::unique_ptr<Director> director;
  std::vector<TranscriptEntry> transcript;
  SessionStatus status = SessionStatus::AwaitingDirector;
  Outcome outcome = Outcome::None;
  double reward = 0.0;
  std::chrono::steady_clock::time_point last_access;
  std::mutex mu;
};

/// Live episodes where a human plays the matcher. Human input is taken as
/// given, without the simulated matcher's noise.
class SessionService {
 public:
  using Clock = std::chrono::steady_clock;

  SessionService(const Lexicon& lex, const Parser& parser, std::string policy_dir, std::uint64_t seed = 1,
                 std::chrono::minutes ttl = std::chrono::minutes(30), RewardParams rewards = {},
                 ConditionThresholds thresholds = {})
      : lex_(lex),
        parser_(parser),
        policy_dir_(std::move(policy_dir)),
        rng_(seed),
        ttl_(ttl),
        rewards_(rewards),
        thresholds_(thresholds) {}

  static const std::vector<std::string>& example_phrasings() {
    static const std::vector<std::string> kExamples{"is it the teal one?", "do you mean dark blue?",
                                                    "is it the second one?", "i pick the first one"};
    return kExamples;
  }

  HttpResponse create(const nlohmann::json& body) {
    if (!body.is_object()) return error(400, "request body must be a JSON object");
    const std::string policy = body.value("policy", std::string("direct"));
    PolicySpec spec;
    try {
      spec = parse_policy(policy);
    } catch (const std::invalid_argument& e) {
      return error(400, e.what());
    }
    std::unique_ptr<Director> director;
    if (spec.kind == PolicyKind::Learned) {
      const std::filesystem::path p = std::filesystem::path(policy_dir_) / spec.weights;
      if (spec.weights.find("..") != std::string::npos || !std::filesystem::is_regular_file(p))
        return error(404, "weight artifact not found: " + spec.weights);
      try {
        director = std::make_unique<LearnedDirector>(load_weights(p.string()));
      } catch (const std::exception& e) {
        return error(400, std::string("invalid weight artifact: ") + e.what());
      }
    } else {
      director = std::make_unique<BaselineDirector>(spec.kind);
    }

    auto s = std::make_shared<Session>();
    {
      std::lock_guard<std::mutex> lock(store_mu_);
      Condition cond;
      try {
        cond = body.contains("condition") ? condition_from_string(body["condition"].get<std::string>())
                                          : kAllConditions[std::uniform_int_distribution<int>(0, 2)(rng_)];
      } catch (const std::exception& e) {
        return error(400, e.what());
      }
      s->state = DialogueState(generate_context(cond, rng_, thresholds_));
      s->id = hex64(rng_()) + hex64(rng_());
    }
    s->policy = policy;
    s->director = std::move(director);
    s->last_access = Clock::now();
    std::lock_guard<std::mutex> lock(s->mu);
    director_turn(*s);
    {
      std::lock_guard<std::mutex> store_lock(store_mu_);
      sessions_[s->id] = s;
    }
    return {201, snapshot(*s)};
  }

  HttpResponse matcher(const std::string& id, const nlohmann::json& body) {
    auto s = find(id);
    if (!s) return error(404, "unknown session " + id);
    std::lock_guard<std::mutex> lock(s->mu);
    s->last_access = Clock::now();
    if (s->status != SessionStatus::AwaitingMatcher) return error(409, "it is not the matcher's turn");
    if (!body.is_object()) return error(400, "request body must be a JSON object");

    if (body.contains("select")) {
      if (!body["select"].is_number_integer()) return error(400, "select must be a patch index 0, 1 or 2");
      const int patch = body["select"].get<int>();
      if (patch < 0 || patch > 2) return error(400, "select must be a patch index 0, 1 or 2");
      select(*s, patch, "");
      return {200, snapshot(*s)};
    }
    if (!body.contains("utterance") || !body["utterance"].is_string())
      return error(400, "expected {\"utterance\": string} or {\"select\": index}");
    const std::string text = body["utterance"].get<std::string>();
    const auto parses = parser_.parse(text);
    const LogicalForm* lf = nullptr;
    for (const auto& p : parses) {
      if (p.lf.act == Act::ClarifyTerm || p.lf.act == Act::ClarifyPatch || p.lf.act == Act::Select) {
        lf = &p.lf;
        break;
      }
    }
    if (!lf) {
      HttpResponse r = error(422, "I couldn't parse that. Ask about a color term or a patch, or select a patch.");
      r.body["examples"] = example_phrasings();
      return r;
    }
    if (lf->act == Act::Select) {
      select(*s, *lf->patch, text);
      return {200, snapshot(*s)};
    }
    s->state = s->state.attach(*lf, Role::Matcher, lex_);
    s->transcript.push_back({Role::Matcher, text, *lf});
    s->state = s->state.end_turn(Role::Matcher);
    director_turn(*s);
    return {200, snapshot(*s)};
  }

  HttpResponse get(const std::string& id) {
    auto s = find(id);
    if (!s) return error(404, "unknown session " + id);
    std::lock_guard<std::mutex> lock(s->mu);
    s->last_access = Clock::now();
    return {200, snapshot(*s)};
  }

  /// Routes a request; `body` is the raw request text.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body) {
    evict_expired(Clock::now());
    static const std::regex kSession("^/sessions/([0-9a-f]+)$");
    static const std::regex kMatcher("^/sessions/([0-9a-f]+)/matcher$");
    std::smatch m;
    auto parse_body = [&](nlohmann::json& j) {
      if (body.empty()) {
        j = nlohmann::json::object();
        return true;
      }
      j = nlohmann::json::parse(body, nullptr, false);
      return !j.is_discarded();
    };
    nlohmann::json j;
    if (path == "/sessions" && method == "POST") {
      if (!parse_body(j)) return error(400, "malformed JSON");
      return create(j);
    }
    if (std::regex_match(path, m, kMatcher) && method == "POST") {
      if (!parse_body(j)) return error(400, "malformed JSON");
      return matcher(m[1], j);
    }
    if (std::regex_match(path, m, kSession) && method == "GET") return get(m[1]);
    if (path == "/sessions" || std::regex_match(path, m, kMatcher) || std::regex_match(path, m, kSession))
      return error(405, "method not allowed");
    return error(404, "no route for " + path);
  }

  std::size_t evict_expired(Clock::time_point now) {
    std::lock_guard<std::mutex> lock(store_mu_);
    std::size_t n = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      bool expired;
      {
        std::lock_guard<std::mutex> s_lock(it->second->mu);
        expired = now - it->second->last_access > ttl_;
      }
      if (expired) {
        it = sessions_.erase(it);
        ++n;
      } else {
        ++it;
      }
    }
    return n;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(store_mu_);
    return sessions_.size();
  }

 private:
  static HttpResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard<std::mutex> lock(store_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  void director_turn(Session& s) {
    s.status = SessionStatus::AwaitingDirector;
    const DialogueState start = s.state;
    for (int step = 0;; ++step) {
      DirectorKind k = s.director->next(start, s.state, step, lex_);
      if (step >= 4 || !is_legal(k, s.state, lex_)) k = DirectorKind::EndTurn;
      auto [lf, next] = execute_action(k, s.state, lex_);
      s.state = std::move(next);
      if (k == DirectorKind::EndTurn) break;
      s.transcript.push_back({Role::Director, realize(lf, lex_), lf});
    }
    s.status = SessionStatus::AwaitingMatcher;
  }

  void select(Session& s, int patch, const std::string& text) {
    const LogicalForm lf = LogicalForm::make(Act::Select, {}, patch);
    s.state = s.state.attach(lf, Role::Matcher, lex_);
    s.transcript.push_back({Role::Matcher, text.empty() ? realize(lf, lex_) : text, lf});
    s.outcome = patch == s.state.context().target_index ? Outcome::Success : Outcome::Failure;
    s.reward = reward(s.outcome, s.state.term_count(), rewards_);
    s.status = SessionStatus::Closed;
  }

  nlohmann::json snapshot(const Session& s) const {
    const bool closed = s.status == SessionStatus::Closed;
    nlohmann::json j = to_json(s.state, closed);
    nlohmann::json transcript = nlohmann::json::array();
    for (const auto& t : s.transcript)
      transcript.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}, {"lf", to_json(t.lf)}});
    nlohmann::json hex = nlohmann::json::array();
    for (const auto& c : s.state.context().patches) hex.push_back(c.hex());
    j["id"] = s.id;
    j["policy"] = s.policy;
    j["status"] = to_string(s.status);
    j["transcript"] = transcript;
    j["hex"] = hex;
    if (closed) {
      j["outcome"] = to_string(s.outcome);
      j["reward"] = s.reward;
    }
    return j;
  }

  const Lexicon& lex_;
  const Parser& parser_;
  std::string policy_dir_;
  Rng rng_;
  std::chrono::minutes ttl_;
  RewardParams rewards_;
  ConditionThresholds thresholds_;
  mutable std::mutex store_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace cicrl
