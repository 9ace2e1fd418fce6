#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "metaroute/metaagent.hpp"
#include "metaroute/self_instruct.hpp"

namespace metaroute {

inline constexpr double kSubtaskSimilarityThreshold = 0.77;

struct SubtaskSpec {
  std::string agent_id;
  std::string text;
  std::set<std::string> required_tags;
  std::map<std::string, std::string> writes;

  friend bool operator==(const SubtaskSpec&, const SubtaskSpec&) = default;
};

/// Benchmark task with its reverse-synthesis ground truth attached.
struct SimTask {
  std::string instruction;
  std::map<std::string, std::string> initial_state;
  std::set<std::string> ground_truth_agents;
  std::vector<SubtaskSpec> ground_truth_subtasks;
  std::map<std::string, std::string> goal;

  friend bool operator==(const SimTask&, const SimTask&) = default;
};

/// Single-agent task template; the unit the reverse synthesis composes.
struct TaskTemplate {
  std::string agent_id;
  std::string instruction;
  std::set<std::string> required_tags;
  std::map<std::string, std::string> writes;
  std::map<std::string, std::string> initial_state;
};

struct LogEntry {
  std::string agent_id;
  std::string subtask;
  std::string outcome;
};

struct SimState {
  std::map<std::string, std::string> kv;
  std::vector<LogEntry> log;  // append-only
};

/// Deterministic executor stand-in. The default behavior applies the matched
/// ground-truth writes restricted to writable_keys; a custom behavior hook
/// must honor the same restriction.
struct ScriptedAgent {
  std::string agent_id;
  std::set<std::string> capability_tags;
  std::set<std::string> writable_keys;
  std::function<void(const SubtaskSpec&, SimState&)> behavior;
};

using CompatibilityPredicate = std::function<bool(const TaskTemplate&, const TaskTemplate&)>;

/// Distinct agents with disjoint goal-key sets.
bool default_compatibility(const TaskTemplate& a, const TaskTemplate& b);

/// Reverse synthesis: every ordered pair (and optionally triple) of compatible
/// templates becomes one composite task whose ground truth is the union of the
/// parts. Instructions are joined with rotating connective templates that
/// RuleBasedPlanner::split_task can undo.
std::vector<SimTask> synthesize_multi_tasks(const std::vector<TaskTemplate>& singles,
                                            const CompatibilityPredicate& compatible =
                                                default_compatibility,
                                            bool include_triples = false);

/// 1 iff the predicted agent set is exactly the ground-truth set.
int agent_match(const std::set<std::string>& predicted, const std::set<std::string>& truth);

/// Partial-credit variant (|intersection| / |union|); reported on request,
/// never part of the headline metrics.
double jaccard_agent_match(const std::set<std::string>& predicted,
                           const std::set<std::string>& truth);

/// Fraction of ground-truth subtasks matched one-to-one (same agent, greedy
/// best-score alignment) with similarity >= threshold.
double subtask_acc(const Plan& predicted, const std::vector<SubtaskSpec>& truth,
                   double threshold, SimilarityScorer& scorer);

/// Sequential dispatch. A step succeeds iff the executor's capability tags
/// cover the matched ground-truth subtask's required tags and the subtask text
/// reaches the similarity threshold against it; successes apply the scripted
/// mutation, failures are logged and execution continues.
SimState execute_plan(const Plan& plan, const SimTask& task,
                      const std::map<std::string, ScriptedAgent>& agents,
                      SimilarityScorer& scorer,
                      double threshold = kSubtaskSimilarityThreshold);

/// 1 iff every goal key holds its expected value in the final state.
int execution_acc(const SimState& final_state, const SimTask& task);

/// "k=v; k=v" serialization of an environment state, sorted by key.
std::string state_text(const std::map<std::string, std::string>& state);

struct TaskRecord {
  int index = 0;
  std::string instruction;
  std::string mode;   // router | manager | ground_truth
  std::string error;  // task-level failure, empty on success
  std::vector<PlanStep> plan_steps;
  std::set<std::string> predicted_agents;
  int agent_match = 0;
  double subtask_acc = 0.0;
  int execution_acc = 0;
  std::vector<LogEntry> log;
};

struct Report {
  std::uint64_t seed = 0;
  std::vector<TaskRecord> records;
  std::optional<double> agent_match;
  std::optional<double> subtask_acc;
  std::optional<double> execution_acc;

  void save(const std::filesystem::path& path) const;
  std::string to_json_string() const;
  static Report load(const std::filesystem::path& path);
};

struct SuiteOptions {
  bool use_ground_truth_plans = false;
  double subtask_threshold = kSubtaskSimilarityThreshold;
  std::uint64_t seed = 0;
};

/// Runs every task through mode selection, routing or planning, execution and
/// the three metrics. Task-level failures are recorded, never fatal.
Report run_suite(const std::vector<SimTask>& tasks, const MetaAgentRefs& meta,
                 const std::map<std::string, ScriptedAgent>& agents, SimilarityScorer& scorer,
                 const SuiteOptions& options);

void save_suite(const std::vector<SimTask>& tasks, const std::filesystem::path& path);
std::vector<SimTask> load_suite(const std::filesystem::path& path);

void save_templates(const std::vector<TaskTemplate>& templates, const std::filesystem::path& path);
std::vector<TaskTemplate> load_templates(const std::filesystem::path& path);

}  // namespace metaroute
