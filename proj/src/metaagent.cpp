#include "metaroute/metaagent.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <sstream>

#include "metaroute/prompts.hpp"

namespace metaroute {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string replace_placeholder(std::string_view templ, std::string_view key,
                                const std::string& value) {
  std::string out(templ);
  const auto pos = out.find(key);
  if (pos != std::string::npos) out.replace(pos, key.size(), value);
  return out;
}

std::string append_state(std::string prompt, const std::string& state) {
  if (!state.empty()) {
    prompt += '\n';
    prompt += kStatePrefix;
    prompt += state;
  }
  return prompt;
}

}  // namespace

std::string render_router_prompt(const std::string& task, const std::string& state) {
  return append_state(replace_placeholder(kRouterPromptTemplate, "{task_name}", task), state);
}

std::string render_manager_prompt(const std::string& task, const std::string& state,
                                  const std::string& agent_documents) {
  std::string prompt =
      replace_placeholder(kManagerPromptTemplate, "{agent_documents}", agent_documents);
  prompt = replace_placeholder(prompt, "{task_name}", task);
  return append_state(std::move(prompt), state);
}

std::string render_mode_prompt(const std::string& task, const std::string& state) {
  return append_state(replace_placeholder(kModePromptTemplate, "{task_name}", task), state);
}

std::string to_string(Mode mode) { return mode == Mode::Router ? "router" : "manager"; }

void ManagerConfig::validate() const {
  if (k < 1) throw ConfigError("manager config: k must be >= 1");
  if (max_steps < 1) throw ConfigError("manager config: max_steps must be >= 1");
}

// ---------------------------------------------------------------------------
// Inference

namespace {

Vector prompt_features(const std::string& prompt, const FrozenModel& model,
                       const Vocabulary& vocab) {
  const TokenSequence tokens = tokenize(prompt, vocab, model.config().max_context);
  return model.encode(tokens).last();
}

std::vector<std::pair<std::string, double>> snapshot_top(const Vector& dist,
                                                         const AgentTokenHead& head,
                                                         const Vocabulary& vocab,
                                                         std::size_t limit) {
  std::vector<int> idx(static_cast<std::size_t>(dist.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return dist[a] > dist[b]; });
  std::vector<std::pair<std::string, double>> top;
  for (int i : idx) {
    if (top.size() >= limit) break;
    const int v = head.vocab_size();
    top.emplace_back(i < v ? vocab.token(i) : head.agent_ids()[static_cast<std::size_t>(i - v)],
                     dist[i]);
  }
  return top;
}

}  // namespace

Mode select_mode(const std::string& task, const std::string& state, const ManagerConfig& cfg,
                 const AgentTokenHead& head, const FrozenModel& model, const Vocabulary& vocab,
                 PlanGenerator* generator, std::string* note) {
  cfg.validate();
  if (task.empty()) throw Error("select_mode: empty task");
  if (cfg.mode_override == ManagerConfig::Override::Router) return Mode::Router;
  if (cfg.mode_override == ManagerConfig::Override::Manager) return Mode::Manager;

  if (generator != nullptr) {
    try {
      const auto decided = generator->decide_mode(render_mode_prompt(task, state));
      if (decided.has_value()) return *decided;
    } catch (const std::exception& e) {
      if (note) *note = std::string("mode generator failed, defaulting to router: ") + e.what();
      return Mode::Router;
    }
  }

  // Margin heuristic over the agent-token slice at the prompt's last position.
  const Vector h = prompt_features(render_router_prompt(task, state), model, vocab);
  const Vector dist = extended_distribution(h, head, /*mask_agents=*/false);
  const int v = head.vocab_size();
  double agent_mass = 0.0;
  for (int j = 0; j < head.agent_count(); ++j) agent_mass += dist[v + j];
  if (agent_mass <= 0.0) return Mode::Router;
  int strong = 0;
  for (int j = 0; j < head.agent_count(); ++j) {
    if (dist[v + j] / agent_mass >= 0.10) ++strong;
  }
  return strong >= 2 ? Mode::Manager : Mode::Router;
}

RoutingDecision route(const std::string& task, const std::string& state,
                      const AgentTokenHead& head, const FrozenModel& model,
                      const Vocabulary& vocab, const ManagerConfig& cfg) {
  cfg.validate();
  if (head.agent_count() == 0) throw Error("route: no enrolled agents");

  TokenSequence tokens = tokenize(render_router_prompt(task, state), vocab,
                                  model.config().max_context);
  const int v = head.vocab_size();
  for (int step = 1; step <= cfg.max_steps; ++step) {
    const Vector h = model.encode(tokens).last();
    const Vector dist = extended_distribution(h, head, /*mask_agents=*/false);
    const auto best = static_cast<int>(argmax_lowest_tie(dist));
    if (best >= v) {
      RoutingDecision decision;
      decision.agent_id = head.agent_ids()[static_cast<std::size_t>(best - v)];
      decision.steps_taken = step;
      decision.top_entries = snapshot_top(dist, head, vocab, 10);
      return decision;
    }
    if (tokens.length() >= model.config().max_context) {
      throw RoutingUndecided("route: context filled before an agent token appeared");
    }
    tokens.ids.push_back(best);
  }
  throw RoutingUndecided("route: no agent token within " + std::to_string(cfg.max_steps) +
                         " steps");
}

std::vector<std::pair<std::string, double>> top_k_agents(const std::string& task,
                                                         const std::string& state,
                                                         const AgentTokenHead& head,
                                                         const FrozenModel& model,
                                                         const Vocabulary& vocab, int k) {
  int active = 0;
  for (int j = 0; j < head.agent_count(); ++j) {
    if (!head.is_tombstoned(j)) ++active;
  }
  if (k < 1 || k > active) throw Error("top_k_agents: k out of range (active agents: " +
                                       std::to_string(active) + ")");

  const Vector h = prompt_features(render_router_prompt(task, state), model, vocab);
  const Vector dist = extended_distribution(h, head, /*mask_agents=*/false);
  const int v = head.vocab_size();

  std::vector<int> rows;
  for (int j = 0; j < head.agent_count(); ++j) {
    if (!head.is_tombstoned(j)) rows.push_back(j);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [&](int a, int b) { return dist[v + a] > dist[v + b]; });
  std::vector<std::pair<std::string, double>> out;
  for (int i = 0; i < k; ++i) {
    const int j = rows[static_cast<std::size_t>(i)];
    out.emplace_back(head.agent_ids()[static_cast<std::size_t>(j)], dist[v + j]);
  }
  return out;
}

Plan parse_plan(const std::string& text) {
  Plan plan;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find("###", pos);
    if (open == std::string::npos) break;
    const std::size_t start = open + 3;
    const std::size_t close = text.find("###", start);
    if (close == std::string::npos) break;
    const std::string_view body(text.data() + start, close - start);
    const std::size_t colon = body.find(':');
    if (colon == std::string_view::npos) {
      // not an assignment marker; rescan from the closing fence
      pos = close;
      continue;
    }
    const std::string name = trim(body.substr(0, colon));
    const std::string subtask = trim(body.substr(colon + 1));
    if (name.empty() || name.find('\n') != std::string::npos || subtask.empty()) {
      pos = close;
      continue;
    }
    plan.steps.push_back(PlanStep{name, subtask});
    pos = close + 3;
  }
  if (plan.steps.empty()) throw PlanParseError("no ###AgentName:subtask### markers found");
  plan.source_mode = Mode::Manager;
  return plan;
}

Plan plan(const std::string& task, const std::string& state, const AgentTokenHead& head,
          const FrozenModel& model, const Vocabulary& vocab, const AgentRegistry& registry,
          const ManagerConfig& cfg, PlanGenerator& generator) {
  cfg.validate();
  if (task.empty()) throw Error("plan: empty task");

  const auto ranked = top_k_agents(task, state, head, model, vocab, cfg.k);
  std::vector<std::string> ids;
  ids.reserve(ranked.size());
  for (const auto& [id, prob] : ranked) ids.push_back(id);

  const std::string context = render_context(registry, ids);
  const std::string prompt = render_manager_prompt(task, state, context);
  const std::string text = generator.complete_plan(prompt);

  Plan result = parse_plan(text);
  const std::set<std::string> scope(ids.begin(), ids.end());
  for (std::size_t i = 0; i < result.steps.size(); ++i) {
    const auto& step = result.steps[i];
    if (!scope.count(step.agent_id)) {
      throw AgentOutOfScope("plan assigns '" + step.agent_id +
                            "' which is outside the top-k selection");
    }
    if (i > 0 && result.steps[i - 1].agent_id == step.agent_id) {
      throw InvalidPlan("plan assigns '" + step.agent_id + "' to consecutive sub-tasks");
    }
  }
  if (result.steps.size() < 2) {
    throw InvalidPlan("manager-mode plan must contain at least two sub-tasks");
  }
  return result;
}

// ---------------------------------------------------------------------------
// RuleBasedPlanner

namespace {

const std::vector<std::string>& connectives() {
  static const std::vector<std::string> list = {
      ". after that, ", ", and then ", ". then, ", ", and also ", ". afterwards, ", "; ",
  };
  return list;
}

std::string strip_segment(std::string s) {
  s = trim(s);
  const std::string low = lower(s);
  if (low.rfind("first, ", 0) == 0) s = s.substr(7);
  s = trim(s);
  while (!s.empty() && s.back() == '.') s.pop_back();
  return trim(s);
}

struct PromptParts {
  std::string task;
  std::vector<AgentDocument> documents;
};

PromptParts parse_manager_prompt(const std::string& prompt) {
  PromptParts parts;
  const std::string task_marker = "Now your task is: ";
  const auto task_pos = prompt.rfind(task_marker);
  if (task_pos == std::string::npos) {
    throw PlanParseError("rule-based planner: prompt has no task line");
  }
  std::string task = prompt.substr(task_pos + task_marker.size());
  const auto state_pos = task.find(std::string("\n") + std::string(kStatePrefix));
  if (state_pos != std::string::npos) task = task.substr(0, state_pos);
  parts.task = trim(task);

  const std::string avail_marker = "available:\n";
  const auto avail_pos = prompt.find(avail_marker);
  const auto req_pos = prompt.find("\n\nRequirements:");
  if (avail_pos != std::string::npos && req_pos != std::string::npos && req_pos > avail_pos) {
    const std::string block =
        prompt.substr(avail_pos + avail_marker.size(), req_pos - avail_pos - avail_marker.size());
    std::size_t start = 0;
    while (start < block.size()) {
      auto next = block.find(",\n\nAgentName: ", start);
      const std::string piece =
          next == std::string::npos ? block.substr(start) : block.substr(start, next - start);
      if (!trim(piece).empty()) {
        try {
          parts.documents.push_back(parse_document(piece));
        } catch (const DocumentError&) {
          // skip malformed blocks; the planner only needs usable documents
        }
      }
      if (next == std::string::npos) break;
      start = next + 3;  // keep "AgentName:" for the next block
    }
  }
  return parts;
}

}  // namespace

std::vector<std::string> RuleBasedPlanner::split_task(const std::string& task) {
  std::vector<std::string> segments;
  std::string rest = task;
  bool progressed = true;
  while (progressed) {
    progressed = false;
    const std::string low = lower(rest);
    std::size_t best_pos = std::string::npos;
    std::size_t best_len = 0;
    for (const auto& conn : connectives()) {
      const auto p = low.find(conn);
      if (p != std::string::npos && p < best_pos) {
        best_pos = p;
        best_len = conn.size();
      }
    }
    if (best_pos != std::string::npos) {
      segments.push_back(strip_segment(rest.substr(0, best_pos)));
      rest = rest.substr(best_pos + best_len);
      progressed = true;
    }
  }
  segments.push_back(strip_segment(rest));
  segments.erase(std::remove_if(segments.begin(), segments.end(),
                                [](const std::string& s) { return s.empty(); }),
                 segments.end());
  return segments;
}

std::string RuleBasedPlanner::complete_plan(const std::string& manager_prompt) {
  const PromptParts parts = parse_manager_prompt(manager_prompt);
  if (parts.documents.empty()) {
    throw PlanParseError("rule-based planner: no agent documents in prompt");
  }

  // Positive-evidence vocabulary per document: applications, capabilities and
  // demonstration texts. Limitations describe what an agent cannot do.
  std::vector<std::set<std::string>> doc_words(parts.documents.size());
  for (std::size_t i = 0; i < parts.documents.size(); ++i) {
    const auto& doc = parts.documents[i];
    auto absorb = [&](const std::string& text) {
      for (auto& w : split_words(text)) doc_words[i].insert(std::move(w));
    };
    absorb(doc.name);
    for (const auto& app : doc.applications) absorb(app);
    absorb(doc.capabilities);
    for (const auto& demo : doc.demonstrations) absorb(demo.text);
  }

  std::vector<std::pair<std::size_t, std::string>> assignments;
  for (const auto& segment : split_task(parts.task)) {
    const auto words = split_words(segment);
    std::size_t best_doc = 0;
    double best_score = -1.0;
    for (std::size_t i = 0; i < parts.documents.size(); ++i) {
      int hits = 0;
      for (const auto& w : words) hits += doc_words[i].count(w) ? 1 : 0;
      const double score = words.empty() ? 0.0 : static_cast<double>(hits) / words.size();
      if (score > best_score) {
        best_score = score;
        best_doc = i;
      }
    }
    if (!assignments.empty() && assignments.back().first == best_doc) {
      assignments.back().second += " and " + segment;
    } else {
      assignments.emplace_back(best_doc, segment);
    }
  }

  std::string out;
  for (const auto& [doc_idx, subtask] : assignments) {
    out += "###" + parts.documents[doc_idx].name + ":" + subtask + "###\n";
  }
  return out;
}

}  // namespace metaroute
