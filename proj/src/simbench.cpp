#include "metaroute/simbench.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace metaroute {

using nlohmann::ordered_json;

bool default_compatibility(const TaskTemplate& a, const TaskTemplate& b) {
  if (a.agent_id == b.agent_id) return false;
  for (const auto& [k, v] : a.writes) {
    if (b.writes.count(k)) return false;
  }
  return true;
}

namespace {

const std::vector<std::pair<std::string, std::string>>& connective_templates() {
  // {infix, terminal}; segments must survive RuleBasedPlanner::split_task.
  static const std::vector<std::pair<std::string, std::string>> templates = {
      {", and then ", ""},
      {". After that, ", "."},
      {", and also ", ""},
      {". Then, ", "."},
  };
  return templates;
}

SubtaskSpec spec_of(const TaskTemplate& t) {
  return SubtaskSpec{t.agent_id, t.instruction, t.required_tags, t.writes};
}

SimTask compose(const std::vector<const TaskTemplate*>& parts, std::size_t connective_index) {
  const auto& [infix, terminal] = connective_templates()[connective_index %
                                                         connective_templates().size()];
  SimTask task;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const TaskTemplate& part = *parts[i];
    if (i > 0) task.instruction += infix;
    task.instruction += part.instruction;
    for (const auto& [k, v] : part.initial_state) task.initial_state.emplace(k, v);
    task.ground_truth_agents.insert(part.agent_id);
    task.ground_truth_subtasks.push_back(spec_of(part));
    for (const auto& [k, v] : part.writes) task.goal[k] = v;
  }
  task.instruction += terminal;
  return task;
}

}  // namespace

std::vector<SimTask> synthesize_multi_tasks(const std::vector<TaskTemplate>& singles,
                                            const CompatibilityPredicate& compatible,
                                            bool include_triples) {
  if (singles.size() < 2) throw Error("synthesize_multi_tasks: need at least 2 templates");
  std::vector<SimTask> tasks;
  for (std::size_t i = 0; i < singles.size(); ++i) {
    for (std::size_t j = 0; j < singles.size(); ++j) {
      if (i == j) continue;
      if (!compatible(singles[i], singles[j])) continue;
      tasks.push_back(compose({&singles[i], &singles[j]}, tasks.size()));
    }
  }
  if (include_triples) {
    for (std::size_t i = 0; i < singles.size(); ++i) {
      for (std::size_t j = 0; j < singles.size(); ++j) {
        for (std::size_t k = 0; k < singles.size(); ++k) {
          if (i == j || j == k || i == k) continue;
          if (!compatible(singles[i], singles[j]) || !compatible(singles[j], singles[k]) ||
              !compatible(singles[i], singles[k])) {
            continue;
          }
          tasks.push_back(compose({&singles[i], &singles[j], &singles[k]}, tasks.size()));
        }
      }
    }
  }
  return tasks;
}

int agent_match(const std::set<std::string>& predicted, const std::set<std::string>& truth) {
  return predicted == truth ? 1 : 0;
}

double jaccard_agent_match(const std::set<std::string>& predicted,
                           const std::set<std::string>& truth) {
  if (predicted.empty() && truth.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& p : predicted) inter += truth.count(p);
  const std::size_t uni = predicted.size() + truth.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double subtask_acc(const Plan& predicted, const std::vector<SubtaskSpec>& truth,
                   double threshold, SimilarityScorer& scorer) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("subtask_acc: threshold must be in (0,1)");
  }
  if (truth.empty()) return 1.0;

  struct Pair {
    double score;
    std::size_t t, p;
  };
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    for (std::size_t p = 0; p < predicted.steps.size(); ++p) {
      if (predicted.steps[p].agent_id != truth[t].agent_id) continue;
      pairs.push_back(Pair{scorer.score_texts(predicted.steps[p].subtask, truth[t].text), t, p});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& a, const Pair& b) { return a.score > b.score; });

  std::vector<bool> t_used(truth.size(), false), p_used(predicted.steps.size(), false);
  int matched = 0;
  for (const Pair& pr : pairs) {
    if (pr.score < threshold) break;
    if (t_used[pr.t] || p_used[pr.p]) continue;
    t_used[pr.t] = p_used[pr.p] = true;
    ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(truth.size());
}

SimState execute_plan(const Plan& plan, const SimTask& task,
                      const std::map<std::string, ScriptedAgent>& agents,
                      SimilarityScorer& scorer, double threshold) {
  SimState state;
  state.kv = task.initial_state;

  for (const PlanStep& step : plan.steps) {
    auto it = agents.find(step.agent_id);
    if (it == agents.end()) throw UnknownAgent(step.agent_id);
    const ScriptedAgent& executor = it->second;

    const SubtaskSpec* best = nullptr;
    double best_score = -2.0;
    for (const SubtaskSpec& spec : task.ground_truth_subtasks) {
      if (spec.agent_id != step.agent_id) continue;
      const double s = scorer.score_texts(step.subtask, spec.text);
      if (s > best_score) {
        best_score = s;
        best = &spec;
      }
    }

    std::string outcome;
    if (best == nullptr) {
      outcome = "failure: agent has no ground-truth subtask in this task";
    } else {
      const bool tags_ok = std::includes(executor.capability_tags.begin(),
                                         executor.capability_tags.end(),
                                         best->required_tags.begin(), best->required_tags.end());
      if (!tags_ok) {
        outcome = "failure: missing capability tags";
      } else if (best_score < threshold) {
        outcome = "failure: subtask below similarity threshold";
      } else {
        if (executor.behavior) {
          executor.behavior(*best, state);
        } else {
          for (const auto& [k, v] : best->writes) {
            if (executor.writable_keys.count(k)) state.kv[k] = v;
          }
        }
        outcome = "success";
      }
    }
    state.log.push_back(LogEntry{step.agent_id, step.subtask, outcome});
  }
  return state;
}

int execution_acc(const SimState& final_state, const SimTask& task) {
  for (const auto& [key, expected] : task.goal) {
    auto it = final_state.kv.find(key);
    if (it == final_state.kv.end() || it->second != expected) return 0;
  }
  return 1;
}

std::string state_text(const std::map<std::string, std::string>& state) {
  std::string out;
  for (const auto& [k, v] : state) {
    if (!out.empty()) out += "; ";
    out += k + "=" + v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Suite runner

Report run_suite(const std::vector<SimTask>& tasks, const MetaAgentRefs& meta,
                 const std::map<std::string, ScriptedAgent>& agents, SimilarityScorer& scorer,
                 const SuiteOptions& options) {
  if (!options.use_ground_truth_plans) {
    if (meta.model == nullptr || meta.vocab == nullptr || meta.head == nullptr ||
        meta.registry == nullptr) {
      throw Error("run_suite: incomplete meta-agent bundle");
    }
  }

  Report report;
  report.seed = options.seed;
  double am_sum = 0.0, sa_sum = 0.0, ea_sum = 0.0;

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const SimTask& task = tasks[i];
    TaskRecord record;
    record.index = static_cast<int>(i);
    record.instruction = task.instruction;

    Plan predicted;
    if (options.use_ground_truth_plans) {
      record.mode = "ground_truth";
      for (const auto& spec : task.ground_truth_subtasks) {
        predicted.steps.push_back(PlanStep{spec.agent_id, spec.text});
      }
      predicted.source_mode = predicted.steps.size() >= 2 ? Mode::Manager : Mode::Router;
    } else {
      const std::string state = state_text(task.initial_state);
      try {
        const Mode mode = select_mode(task.instruction, state, meta.config, *meta.head,
                                      *meta.model, *meta.vocab, meta.generator);
        record.mode = to_string(mode);
        if (mode == Mode::Router) {
          const RoutingDecision decision =
              route(task.instruction, state, *meta.head, *meta.model, *meta.vocab, meta.config);
          predicted.steps.push_back(PlanStep{decision.agent_id, task.instruction});
          predicted.source_mode = Mode::Router;
        } else {
          if (meta.generator == nullptr) throw Error("manager mode requires a plan generator");
          predicted = plan(task.instruction, state, *meta.head, *meta.model, *meta.vocab,
                           *meta.registry, meta.config, *meta.generator);
        }
      } catch (const Error& e) {
        record.error = e.what();
        predicted.steps.clear();
      }
    }

    record.plan_steps = predicted.steps;
    for (const auto& step : predicted.steps) record.predicted_agents.insert(step.agent_id);
    record.agent_match = agent_match(record.predicted_agents, task.ground_truth_agents);
    record.subtask_acc =
        subtask_acc(predicted, task.ground_truth_subtasks, options.subtask_threshold, scorer);

    SimState final_state;
    if (!predicted.steps.empty()) {
      final_state = execute_plan(predicted, task, agents, scorer, options.subtask_threshold);
    } else {
      final_state.kv = task.initial_state;
    }
    record.execution_acc = execution_acc(final_state, task);
    record.log = final_state.log;

    am_sum += record.agent_match;
    sa_sum += record.subtask_acc;
    ea_sum += record.execution_acc;
    report.records.push_back(std::move(record));
  }

  if (!tasks.empty()) {
    const auto n = static_cast<double>(tasks.size());
    report.agent_match = am_sum / n;
    report.subtask_acc = sa_sum / n;
    report.execution_acc = ea_sum / n;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

ordered_json subtask_to_json(const SubtaskSpec& s) {
  return {{"agent_id", s.agent_id},
          {"text", s.text},
          {"required_tags", s.required_tags},
          {"writes", s.writes}};
}

SubtaskSpec subtask_from_json(const ordered_json& j) {
  SubtaskSpec s;
  s.agent_id = j.at("agent_id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.required_tags = j.at("required_tags").get<std::set<std::string>>();
  s.writes = j.at("writes").get<std::map<std::string, std::string>>();
  return s;
}

void write_json_file(const ordered_json& j, const std::filesystem::path& path,
                     const char* what) {
  std::ofstream out(path);
  if (!out) throw CheckpointError(std::string("cannot open ") + what + " for writing: " +
                                  path.string());
  out << j.dump(2) << '\n';
}

ordered_json read_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw CheckpointError(std::string("cannot open ") + what + ": " + path.string());
  try {
    ordered_json j;
    in >> j;
    return j;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string(what) + " parse error: " + e.what());
  }
}

}  // namespace

void save_suite(const std::vector<SimTask>& tasks, const std::filesystem::path& path) {
  ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "sim_suite";
  ordered_json arr = ordered_json::array();
  for (const auto& t : tasks) {
    ordered_json tj;
    tj["instruction"] = t.instruction;
    tj["initial_state"] = t.initial_state;
    tj["ground_truth_agents"] = t.ground_truth_agents;
    ordered_json subs = ordered_json::array();
    for (const auto& s : t.ground_truth_subtasks) subs.push_back(subtask_to_json(s));
    tj["ground_truth_subtasks"] = std::move(subs);
    tj["goal"] = t.goal;
    arr.push_back(std::move(tj));
  }
  j["tasks"] = std::move(arr);
  write_json_file(j, path, "suite file");
}

std::vector<SimTask> load_suite(const std::filesystem::path& path) {
  const ordered_json j = read_json_file(path, "suite file");
  if (j.value("format_version", 0) != 1 || j.value("kind", "") != "sim_suite") {
    throw CheckpointError("suite file: unsupported format");
  }
  std::vector<SimTask> tasks;
  for (const auto& tj : j.at("tasks")) {
    SimTask t;
    t.instruction = tj.at("instruction").get<std::string>();
    t.initial_state = tj.at("initial_state").get<std::map<std::string, std::string>>();
    t.ground_truth_agents = tj.at("ground_truth_agents").get<std::set<std::string>>();
    for (const auto& sj : tj.at("ground_truth_subtasks")) {
      t.ground_truth_subtasks.push_back(subtask_from_json(sj));
    }
    t.goal = tj.at("goal").get<std::map<std::string, std::string>>();
    tasks.push_back(std::move(t));
  }
  return tasks;
}

void save_templates(const std::vector<TaskTemplate>& templates,
                    const std::filesystem::path& path) {
  ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "task_templates";
  ordered_json arr = ordered_json::array();
  for (const auto& t : templates) {
    arr.push_back({{"agent_id", t.agent_id},
                   {"instruction", t.instruction},
                   {"required_tags", t.required_tags},
                   {"writes", t.writes},
                   {"initial_state", t.initial_state}});
  }
  j["templates"] = std::move(arr);
  write_json_file(j, path, "templates file");
}

std::vector<TaskTemplate> load_templates(const std::filesystem::path& path) {
  const ordered_json j = read_json_file(path, "templates file");
  if (j.value("format_version", 0) != 1 || j.value("kind", "") != "task_templates") {
    throw CheckpointError("templates file: unsupported format");
  }
  std::vector<TaskTemplate> templates;
  for (const auto& tj : j.at("templates")) {
    TaskTemplate t;
    t.agent_id = tj.at("agent_id").get<std::string>();
    t.instruction = tj.at("instruction").get<std::string>();
    t.required_tags = tj.at("required_tags").get<std::set<std::string>>();
    t.writes = tj.at("writes").get<std::map<std::string, std::string>>();
    t.initial_state = tj.at("initial_state").get<std::map<std::string, std::string>>();
    templates.push_back(std::move(t));
  }
  return templates;
}

void Report::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot open report file for writing: " + path.string());
  out << to_json_string() << '\n';
}

std::string Report::to_json_string() const {
  ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "bench_report";
  j["seed"] = seed;
  j["n_tasks"] = records.size();
  ordered_json agg;
  agg["agent_match"] = agent_match.has_value() ? ordered_json(*agent_match) : ordered_json();
  agg["subtask_acc"] = subtask_acc.has_value() ? ordered_json(*subtask_acc) : ordered_json();
  agg["execution_acc"] =
      execution_acc.has_value() ? ordered_json(*execution_acc) : ordered_json();
  j["aggregates"] = std::move(agg);
  ordered_json arr = ordered_json::array();
  for (const auto& r : records) {
    ordered_json rj;
    rj["index"] = r.index;
    rj["instruction"] = r.instruction;
    rj["mode"] = r.mode;
    rj["error"] = r.error;
    ordered_json steps = ordered_json::array();
    for (const auto& s : r.plan_steps) {
      steps.push_back({{"agent_id", s.agent_id}, {"subtask", s.subtask}});
    }
    rj["plan"] = std::move(steps);
    rj["predicted_agents"] = r.predicted_agents;
    rj["agent_match"] = r.agent_match;
    rj["subtask_acc"] = r.subtask_acc;
    rj["execution_acc"] = r.execution_acc;
    ordered_json log = ordered_json::array();
    for (const auto& entry : r.log) {
      log.push_back(
          {{"agent_id", entry.agent_id}, {"subtask", entry.subtask}, {"outcome", entry.outcome}});
    }
    rj["log"] = std::move(log);
    arr.push_back(std::move(rj));
  }
  j["tasks"] = std::move(arr);
  return j.dump(2);
}

Report Report::load(const std::filesystem::path& path) {
  const ordered_json j = read_json_file(path, "report file");
  if (j.value("format_version", 0) != 1 || j.value("kind", "") != "bench_report") {
    throw CheckpointError("report file: unsupported format");
  }
  Report report;
  report.seed = j.at("seed").get<std::uint64_t>();
  const auto& agg = j.at("aggregates");
  if (!agg.at("agent_match").is_null()) report.agent_match = agg.at("agent_match").get<double>();
  if (!agg.at("subtask_acc").is_null()) report.subtask_acc = agg.at("subtask_acc").get<double>();
  if (!agg.at("execution_acc").is_null()) {
    report.execution_acc = agg.at("execution_acc").get<double>();
  }
  for (const auto& rj : j.at("tasks")) {
    TaskRecord r;
    r.index = rj.at("index").get<int>();
    r.instruction = rj.at("instruction").get<std::string>();
    r.mode = rj.at("mode").get<std::string>();
    r.error = rj.at("error").get<std::string>();
    for (const auto& sj : rj.at("plan")) {
      r.plan_steps.push_back(
          PlanStep{sj.at("agent_id").get<std::string>(), sj.at("subtask").get<std::string>()});
    }
    r.predicted_agents = rj.at("predicted_agents").get<std::set<std::string>>();
    r.agent_match = rj.at("agent_match").get<int>();
    r.subtask_acc = rj.at("subtask_acc").get<double>();
    r.execution_acc = rj.at("execution_acc").get<int>();
    for (const auto& lj : rj.at("log")) {
      r.log.push_back(LogEntry{lj.at("agent_id").get<std::string>(),
                               lj.at("subtask").get<std::string>(),
                               lj.at("outcome").get<std::string>()});
    }
    report.records.push_back(std::move(r));
  }
  return report;
}

}  // namespace metaroute
