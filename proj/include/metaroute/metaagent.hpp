#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metaroute/agent_head.hpp"
#include "metaroute/frozen_lm.hpp"
#include "metaroute/registry.hpp"

namespace metaroute {

enum class Mode { Router, Manager };

std::string to_string(Mode mode);

struct ManagerConfig {
  int k = 5;
  int max_steps = 64;

  enum class Override { Auto, Router, Manager };
  Override mode_override = Override::Auto;

  void validate() const;
};

struct RoutingDecision {
  std::string agent_id;
  int steps_taken = 0;
  /// Top entries of the distribution at the halting step: agent ids for agent
  /// tokens, vocabulary strings for word tokens.
  std::vector<std::pair<std::string, double>> top_entries;
};

struct PlanStep {
  std::string agent_id;
  std::string subtask;

  friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

struct Plan {
  std::vector<PlanStep> steps;
  Mode source_mode = Mode::Manager;
};

/// Produces plan text from a manager prompt. decide_mode may answer the
/// router/manager question; returning nullopt delegates to the offline margin
/// heuristic.
class PlanGenerator {
 public:
  virtual ~PlanGenerator() = default;
  virtual std::string complete_plan(const std::string& manager_prompt) = 0;
  virtual std::optional<Mode> decide_mode(const std::string& mode_prompt) {
    (void)mode_prompt;
    return std::nullopt;
  }
};

/// Offline stand-in for a base model driving manager mode: splits the task on
/// discourse connectives and assigns each segment to the in-context document
/// with the highest word overlap. Deterministic.
class RuleBasedPlanner : public PlanGenerator {
 public:
  std::string complete_plan(const std::string& manager_prompt) override;

  /// Connective-based segmentation used by complete_plan; exposed for tests
  /// and for the reverse-synthesis templates that must stay splittable.
  static std::vector<std::string> split_task(const std::string& task);
};

/// Router/manager decision. Honors cfg.mode_override; in auto mode asks the
/// generator when one is supplied, otherwise applies the margin heuristic:
/// manager iff at least two agent tokens each hold >= 10% of the agent-token
/// probability mass at the prompt's last position. Generator failures fall
/// back to router and append to `note` when provided.
Mode select_mode(const std::string& task, const std::string& state, const ManagerConfig& cfg,
                 const AgentTokenHead& head, const FrozenModel& model, const Vocabulary& vocab,
                 PlanGenerator* generator = nullptr, std::string* note = nullptr);

/// Greedy decode from the rendered router prompt until an agent token wins the
/// argmax over words and agents. Ties resolve to the lowest index. Throws
/// RoutingUndecided when no agent token appears within cfg.max_steps (or the
/// context fills up first).
RoutingDecision route(const std::string& task, const std::string& state,
                      const AgentTokenHead& head, const FrozenModel& model,
                      const Vocabulary& vocab, const ManagerConfig& cfg);

/// Agents ranked by probability at the prompt's final position, ties by row
/// index. k must lie in [1, active agent count]; tombstoned rows are skipped.
std::vector<std::pair<std::string, double>> top_k_agents(const std::string& task,
                                                         const std::string& state,
                                                         const AgentTokenHead& head,
                                                         const FrozenModel& model,
                                                         const Vocabulary& vocab, int k);

/// Manager mode: narrows the context to the top-k agent documents, obtains
/// plan text from the generator and parses it. Every assigned agent must be
/// one of the k selected; consecutive steps must not repeat an agent; a
/// manager plan has at least two steps.
Plan plan(const std::string& task, const std::string& state, const AgentTokenHead& head,
          const FrozenModel& model, const Vocabulary& vocab, const AgentRegistry& registry,
          const ManagerConfig& cfg, PlanGenerator& generator);

/// Extracts every ###AgentName:subtask### occurrence in order, trimming both
/// fields; surrounding prose is ignored. Zero matches raise PlanParseError.
Plan parse_plan(const std::string& text);

/// Read-only bundle handed to the benchmark harness.
struct MetaAgentRefs {
  const FrozenModel* model = nullptr;
  const Vocabulary* vocab = nullptr;
  const AgentTokenHead* head = nullptr;
  const AgentRegistry* registry = nullptr;
  ManagerConfig config;
  PlanGenerator* generator = nullptr;
};

}  // namespace metaroute
