#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "metaroute/registry.hpp"
#include "metaroute/self_instruct.hpp"
#include "metaroute/simbench.hpp"

namespace metaroute {

/// A desk-scale agent pool with pairwise-disjoint content vocabularies: one
/// enrollment document, one scripted executor and three task templates per
/// agent. Task texts mix a shared scaffold with words drawn only from the
/// agent's own pool, which makes routing separable by construction.
struct SyntheticPool {
  std::vector<AgentDocument> documents;
  std::map<std::string, ScriptedAgent> executors;
  std::vector<TaskTemplate> templates;
  std::map<std::string, std::vector<std::string>> word_pools;
};

/// Up to 21 themed agents, deterministic in (n_agents, seed).
SyntheticPool make_synthetic_pool(int n_agents, std::uint64_t seed);

int max_synthetic_agents();

/// One scaffolded task text over the agent's word pool.
std::string sample_task_text(const SyntheticPool& pool, const std::string& agent_id,
                             std::mt19937_64& rng);

/// `size` distinct sampled task texts for the agent.
DemonstrationSet sample_demo_set(const SyntheticPool& pool, const std::string& agent_id, int size,
                                 std::uint64_t seed);

/// Everything a vocabulary must cover to run this pool offline: rendered
/// documents, task templates and their states, scaffold patterns, prompt
/// templates and generator paraphrases.
std::vector<std::string> vocabulary_corpus(const SyntheticPool& pool);

}  // namespace metaroute
