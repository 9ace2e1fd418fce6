#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "metaroute/frozen_lm.hpp"
#include "metaroute/self_instruct.hpp"

namespace metaroute {

struct TrainConfig {
  double learning_rate = 1e-2;
  double weight_decay = 1.0;
  int epochs = 10;
  int batch_size = 8;
  std::uint64_t seed = 0;
  bool freeze_existing = false;

  /// Settings for a full-scale backbone; far too slow for the bundled toy
  /// model but kept for reference.
  static TrainConfig backbone_preset() {
    TrainConfig cfg;
    cfg.learning_rate = 4e-5;
    cfg.weight_decay = 1.0;
    cfg.epochs = 10;
    return cfg;
  }

  void validate() const;
};

struct LossTrace {
  std::vector<double> epoch_mean_nll;
};

/// The frozen word head plus one trainable embedding row per enrolled agent.
/// The word rows are a bit-exact copy of the parent model's head and are
/// never written; only the agent rows carry gradient.
class AgentTokenHead {
 public:
  explicit AgentTokenHead(const FrozenModel& model);

  int hidden_dim() const { return static_cast<int>(word_head_.cols()); }
  int vocab_size() const { return static_cast<int>(word_head_.rows()); }
  int agent_count() const { return static_cast<int>(agent_ids_.size()); }

  const std::vector<std::string>& agent_ids() const { return agent_ids_; }
  /// Row of an agent id, or -1 when absent.
  int row_of(const std::string& agent_id) const;
  bool has_agent(const std::string& agent_id) const { return row_of(agent_id) >= 0; }

  const Matrix& word_head() const { return word_head_; }
  const Matrix& agent_embeddings() const { return agent_embeddings_; }

  bool is_tombstoned(int row) const;
  void tombstone(int row);

  /// Overwrites one agent row (importing externally trained embeddings).
  void set_agent_row(int row, const RowVector& values);

  /// Rows covered by a completed training run; freeze_existing freezes
  /// everything below this watermark. Zero means never trained.
  int trained_row_count() const { return trained_row_count_; }
  bool trained() const { return trained_row_count_ > 0; }

  std::int64_t trainable_parameter_count() const {
    return static_cast<std::int64_t>(agent_count()) * hidden_dim();
  }

  std::uint64_t parent_checksum() const { return parent_checksum_; }
  /// Checksum over the frozen word rows only.
  std::uint64_t word_head_checksum() const { return checksum(word_head_); }
  std::uint64_t agent_checksum() const { return checksum(agent_embeddings_); }

  /// Versioned JSON checkpoint of the agent rows; the parent model checksum
  /// is stored and verified on load.
  void save(const std::filesystem::path& path) const;
  static AgentTokenHead load(const std::filesystem::path& path, const FrozenModel& model);

 private:
  AgentTokenHead() = default;

  Matrix word_head_;         // |V| x d, frozen copy
  Matrix agent_embeddings_;  // |A| x d, trainable
  std::vector<std::string> agent_ids_;
  std::vector<std::uint8_t> tombstoned_;
  int trained_row_count_ = 0;
  std::uint64_t parent_checksum_ = 0;

  friend AgentTokenHead extend_head(const AgentTokenHead&, const std::string&, std::uint64_t);
  friend std::pair<AgentTokenHead, LossTrace> train(AgentTokenHead,
                                                    const std::vector<DemonstrationSet>&,
                                                    const FrozenModel&, const Vocabulary&,
                                                    const TrainConfig&);
};

/// Appends one agent row initialized to the mean word embedding plus seeded
/// Gaussian noise (sigma 0.01). Every pre-existing row is bit-unchanged.
AgentTokenHead extend_head(const AgentTokenHead& head, const std::string& agent_id,
                           std::uint64_t seed);

/// Next-token distribution over words followed by agent tokens. With
/// mask_agents set the agent logits are excluded and the word slice equals
/// the frozen model's base distribution bit for bit. Tombstoned agents always
/// carry probability zero.
Vector extended_distribution(const Vector& h, const AgentTokenHead& head, bool mask_agents);

/// Gradient of -log P(target agent | h) with respect to the agent rows only:
/// row j receives (p_j - [j == target]) * h.
Matrix token_gradient(const Vector& h, int target_agent_row, const AgentTokenHead& head);

/// Trains the agent rows on rendered router prompts with AdamW-style decoupled
/// weight decay. With freeze_existing set, rows below the trained watermark
/// receive neither gradient nor decay and stay bit-identical. The model body
/// and word head are never touched.
std::pair<AgentTokenHead, LossTrace> train(AgentTokenHead head,
                                           const std::vector<DemonstrationSet>& demo_sets,
                                           const FrozenModel& model, const Vocabulary& vocab,
                                           const TrainConfig& cfg);

}  // namespace metaroute
