#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "metaroute/frozen_lm.hpp"
#include "metaroute/registry.hpp"

namespace metaroute {

struct Demonstration {
  std::string task_text;
  std::string state_text;

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

struct Provenance {
  bool is_seed = true;
  int round = 0;  // generation round for non-seed items

  static Provenance seed() { return {true, 0}; }
  static Provenance generated(int round) { return {false, round}; }
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Ordered, duplicate-free collection of demonstrations for one agent.
class DemonstrationSet {
 public:
  explicit DemonstrationSet(std::string agent_id) : agent_id_(std::move(agent_id)) {}

  const std::string& agent_id() const { return agent_id_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Demonstration& at(std::size_t i) const { return items_.at(i); }
  const Provenance& provenance(std::size_t i) const { return provenance_.at(i); }
  const std::vector<Demonstration>& items() const { return items_; }

  /// Returns false (and leaves the set unchanged) when an item with the same
  /// (task_text, state_text) is already present.
  bool add(Demonstration item, Provenance p);
  bool contains(const Demonstration& item) const;

  /// JSON lines, one {task_text, state_text, provenance} object per line.
  void save_jsonl(const std::filesystem::path& path) const;
  static DemonstrationSet load_jsonl(std::string agent_id, const std::filesystem::path& path);

 private:
  std::string agent_id_;
  std::vector<Demonstration> items_;
  std::vector<Provenance> provenance_;
  std::unordered_set<std::string> keys_;
};

/// Build a seed set from the demonstrations of an enrollment document.
DemonstrationSet seed_set(const AgentDocument& doc);

struct StalledBootstrap : Error {
  StalledBootstrap(std::string agent_id, DemonstrationSet partial_set)
      : Error("bootstrap stalled for agent '" + agent_id +
              "': 3 consecutive rounds with zero acceptances"),
        partial(std::move(partial_set)) {}
  DemonstrationSet partial;
};

struct FilterConfig {
  double tau1 = 0.8;
  double tau2 = 0.9;
  int target_size = 100;
  int max_rounds = 20;

  enum class Aggregation { Min, Mean };
  Aggregation aggregation = Aggregation::Min;

  void validate() const;
};

/// Produces candidate demonstrations from a seed set and a capability
/// description. Implementations must be deterministic given their injected
/// seed and return at most the requested count.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::vector<Demonstration> generate(const DemonstrationSet& seeds,
                                              const std::string& capability_text, int n) = 0;
};

/// Offline generator: recombines seed task texts, applies a small paraphrase
/// table and mixes in capability keywords. Deterministic per seed.
class ReferenceGenerator : public Generator {
 public:
  explicit ReferenceGenerator(std::uint64_t seed);
  std::vector<Demonstration> generate(const DemonstrationSet& seeds,
                                      const std::string& capability_text, int n) override;

  /// Words the generator may introduce on its own; callers building a
  /// vocabulary should include them in the corpus.
  static const std::vector<std::string>& paraphrase_words();

 private:
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
};

/// Greedy-match F1 similarity over contextual token embeddings with a
/// per-text embedding cache. Not safe for concurrent use; construct one
/// scorer per thread (the underlying model is shared and read-only).
class SimilarityScorer {
 public:
  SimilarityScorer(const FrozenModel& model, const Vocabulary& vocab)
      : model_(&model), vocab_(&vocab) {}

  double operator()(const Demonstration& a, const Demonstration& b);
  double score_texts(const std::string& a, const std::string& b);

  const FrozenModel& model() const { return *model_; }
  const Vocabulary& vocab() const { return *vocab_; }

 private:
  const Matrix& embeddings(const std::string& text);

  const FrozenModel* model_;
  const Vocabulary* vocab_;
  std::unordered_map<std::string, Matrix> cache_;
};

/// Symmetric greedy-match F1 of the two task texts in [-1, 1].
double similarity(const Demonstration& a, const Demonstration& b, const FrozenModel& model,
                  const Vocabulary& vocab);

/// Band filter over candidates: candidates are prioritized by distance to the
/// nearer threshold (descending, ties by input order) and accepted only when
/// every pairwise score against the existing set and the already-accepted
/// items lies inside [tau1, tau2]. Returned in acceptance order.
std::vector<Demonstration> greedy_filter(const std::vector<Demonstration>& candidates,
                                         const DemonstrationSet& existing,
                                         const FilterConfig& cfg, SimilarityScorer& scorer);

std::vector<Demonstration> greedy_filter(const std::vector<Demonstration>& candidates,
                                         const DemonstrationSet& existing,
                                         const FilterConfig& cfg, const FrozenModel& model,
                                         const Vocabulary& vocab);

/// One generation round: asks the generator for up to n candidates and drops
/// exact duplicates (against the set and within the batch) before filtering.
/// Generator failures surface as GenerationFailed carrying the round index.
std::vector<Demonstration> generate_round(const DemonstrationSet& set, const AgentDocument& doc,
                                          Generator& gen, int n, int round = 0);

/// Iterative bootstrap: generate, band-filter, merge, until the set reaches
/// cfg.target_size or cfg.max_rounds is exhausted. Three consecutive rounds
/// without acceptances raise StalledBootstrap with the partial set attached.
DemonstrationSet bootstrap(const AgentDocument& doc, Generator& gen, const FilterConfig& cfg,
                           const FrozenModel& model, const Vocabulary& vocab);

struct ScoreStats {
  int pairs = 0;
  double min = 0.0, max = 0.0, mean = 0.0;
  double p05 = 0.0, p25 = 0.0, median = 0.0, p75 = 0.0, p95 = 0.0;
};

/// Distribution of pairwise scores within a set; the basis for picking a
/// band that matches this scorer.
ScoreStats score_distribution(const DemonstrationSet& set, SimilarityScorer& scorer);

}  // namespace metaroute
