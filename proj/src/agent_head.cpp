#include "metaroute/agent_head.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "metaroute/prompts.hpp"

namespace metaroute {

using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("train config: learning_rate must be > 0");
  if (epochs < 0) throw ConfigError("train config: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be >= 0");
}

AgentTokenHead::AgentTokenHead(const FrozenModel& model)
    : word_head_(model.word_head()),
      agent_embeddings_(0, model.config().hidden_dim),
      parent_checksum_(model.weight_checksum()) {}

int AgentTokenHead::row_of(const std::string& agent_id) const {
  for (int i = 0; i < agent_count(); ++i) {
    if (agent_ids_[static_cast<std::size_t>(i)] == agent_id) return i;
  }
  return -1;
}

bool AgentTokenHead::is_tombstoned(int row) const {
  if (row < 0 || row >= agent_count()) throw Error("tombstone query: row out of range");
  return tombstoned_[static_cast<std::size_t>(row)] != 0;
}

void AgentTokenHead::tombstone(int row) {
  if (row < 0 || row >= agent_count()) throw Error("tombstone: row out of range");
  tombstoned_[static_cast<std::size_t>(row)] = 1;
}

void AgentTokenHead::set_agent_row(int row, const RowVector& values) {
  if (row < 0 || row >= agent_count()) throw Error("set_agent_row: row out of range");
  if (values.size() != hidden_dim()) throw Error("set_agent_row: wrong width");
  agent_embeddings_.row(row) = values;
}

AgentTokenHead extend_head(const AgentTokenHead& head, const std::string& agent_id,
                           std::uint64_t seed) {
  if (agent_id.empty()) throw Error("extend_head: empty agent id");
  if (head.has_agent(agent_id)) throw DuplicateAgent(agent_id);

  AgentTokenHead out = head;
  const int d = out.hidden_dim();
  RowVector mean = RowVector::Zero(d);
  for (Eigen::Index r = 0; r < out.word_head_.rows(); ++r) mean += out.word_head_.row(r);
  mean /= static_cast<double>(out.word_head_.rows());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  RowVector row(d);
  for (int c = 0; c < d; ++c) row[c] = mean[c] + noise(rng);

  out.agent_embeddings_.conservativeResize(out.agent_count() + 1, d);
  out.agent_embeddings_.row(out.agent_count()) = row;
  out.agent_ids_.push_back(agent_id);
  out.tombstoned_.push_back(0);
  return out;
}

namespace {

Vector extended_logits(const Vector& h, const AgentTokenHead& head) {
  // Word logits first so the base-distribution slice reuses the exact same
  // matrix-vector product.
  const Vector word_logits = head.word_head() * h;
  const int v = head.vocab_size();
  const int a = head.agent_count();
  Vector logits(v + a);
  logits.head(v) = word_logits;
  if (a > 0) logits.tail(a) = head.agent_embeddings() * h;
  for (int j = 0; j < a; ++j) {
    if (head.is_tombstoned(j)) logits[v + j] = kNegInf;
  }
  return logits;
}

}  // namespace

Vector extended_distribution(const Vector& h, const AgentTokenHead& head, bool mask_agents) {
  if (h.size() != head.hidden_dim()) {
    throw Error("extended_distribution: hidden vector has wrong size");
  }
  if (!all_finite(h)) throw Error("extended_distribution: non-finite hidden vector");

  const int v = head.vocab_size();
  const int a = head.agent_count();
  if (mask_agents) {
    const Vector word_logits = head.word_head() * h;
    Vector out = Vector::Zero(v + a);
    out.head(v) = softmax(word_logits);
    return out;
  }
  return softmax(extended_logits(h, head));
}

Matrix token_gradient(const Vector& h, int target_agent_row, const AgentTokenHead& head) {
  if (target_agent_row < 0 || target_agent_row >= head.agent_count()) {
    throw Error("token_gradient: target agent row out of range");
  }
  const Vector p = extended_distribution(h, head, /*mask_agents=*/false);
  const int v = head.vocab_size();
  Matrix grad(head.agent_count(), head.hidden_dim());
  for (int j = 0; j < head.agent_count(); ++j) {
    const double coeff = p[v + j] - (j == target_agent_row ? 1.0 : 0.0);
    grad.row(j) = coeff * h.transpose();
  }
  return grad;
}

std::pair<AgentTokenHead, LossTrace> train(AgentTokenHead head,
                                           const std::vector<DemonstrationSet>& demo_sets,
                                           const FrozenModel& model, const Vocabulary& vocab,
                                           const TrainConfig& cfg) {
  cfg.validate();
  if (head.word_head_checksum() != checksum(model.word_head())) {
    throw Error("train: head does not belong to this model");
  }

  struct Item {
    int target_row;
    Vector features;
  };
  std::vector<Item> items;
  std::unordered_map<std::string, Vector> feature_cache;
  for (const auto& set : demo_sets) {
    const int row = head.row_of(set.agent_id());
    if (row < 0) throw UnknownAgent(set.agent_id());
    if (head.is_tombstoned(row)) throw UnknownAgent(set.agent_id());
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Demonstration& demo = set.at(i);
      const std::string prompt = render_router_prompt(demo.task_text, demo.state_text);
      if (prompt.empty()) throw Error("train: demonstration renders to an empty prefix");
      auto it = feature_cache.find(prompt);
      if (it == feature_cache.end()) {
        const TokenSequence tokens = tokenize(prompt, vocab, model.config().max_context);
        it = feature_cache.emplace(prompt, model.encode(tokens).last()).first;
      }
      items.push_back(Item{row, it->second});
    }
  }
  if (items.empty()) throw Error("train: empty training corpus");

  LossTrace trace;
  if (cfg.epochs == 0) return {std::move(head), trace};

  const int first_trainable = cfg.freeze_existing ? head.trained_row_count_ : 0;
  const int rows = head.agent_count();
  const int d = head.hidden_dim();
  const int v = head.vocab_size();

  // Fresh AdamW state per run; moments are not part of the checkpoint.
  Matrix m = Matrix::Zero(rows, d);
  Matrix u = Matrix::Zero(rows, d);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Matrix grad = Matrix::Zero(rows, d);
      for (std::size_t k = start; k < end; ++k) {
        const Item& item = items[order[k]];
        const Vector logits = extended_logits(item.features, head);
        const double lse = log_sum_exp(logits);
        loss_sum += lse - logits[v + item.target_row];
        for (int j = 0; j < rows; ++j) {
          if (logits[v + j] == kNegInf) continue;
          const double pj = std::exp(logits[v + j] - lse);
          const double coeff = pj - (j == item.target_row ? 1.0 : 0.0);
          grad.row(j) += coeff * item.features.transpose();
        }
      }
      grad /= static_cast<double>(end - start);

      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (int j = first_trainable; j < rows; ++j) {
        if (head.tombstoned_[static_cast<std::size_t>(j)]) continue;
        for (int c = 0; c < d; ++c) {
          const double g = grad(j, c);
          m(j, c) = beta1 * m(j, c) + (1.0 - beta1) * g;
          u(j, c) = beta2 * u(j, c) + (1.0 - beta2) * g * g;
          const double mhat = m(j, c) / bc1;
          const double uhat = u(j, c) / bc2;
          double w = head.agent_embeddings_(j, c);
          w -= cfg.learning_rate * (mhat / (std::sqrt(uhat) + eps) + cfg.weight_decay * w);
          head.agent_embeddings_(j, c) = w;
        }
      }
    }
    trace.epoch_mean_nll.push_back(loss_sum / static_cast<double>(items.size()));
  }

  head.trained_row_count_ = rows;
  return {std::move(head), trace};
}

// ---------------------------------------------------------------------------
// Checkpoint

void AgentTokenHead::save(const std::filesystem::path& path) const {
  ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "agent_head";
  j["d"] = hidden_dim();
  j["parent_checksum"] = parent_checksum_;
  j["trained_row_count"] = trained_row_count_;
  j["agent_ids"] = agent_ids_;
  ordered_json tombs = ordered_json::array();
  for (auto t : tombstoned_) tombs.push_back(t != 0);
  j["tombstoned"] = std::move(tombs);
  ordered_json rows = ordered_json::array();
  for (int r = 0; r < agent_count(); ++r) {
    ordered_json row = ordered_json::array();
    for (int c = 0; c < hidden_dim(); ++c) row.push_back(agent_embeddings_(r, c));
    rows.push_back(std::move(row));
  }
  j["agent_embeddings"] = std::move(rows);

  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot open head checkpoint for writing: " + path.string());
  out << j.dump(2) << '\n';
}

AgentTokenHead AgentTokenHead::load(const std::filesystem::path& path, const FrozenModel& model) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open head checkpoint: " + path.string());
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("head checkpoint parse error: ") + e.what());
  }
  if (j.value("format_version", 0) != 1 || j.value("kind", "") != "agent_head") {
    throw CheckpointError("head checkpoint: unsupported format");
  }

  AgentTokenHead head(model);
  if (j.at("d").get<int>() != head.hidden_dim()) {
    throw CheckpointError("head checkpoint: hidden dimension mismatch");
  }
  if (j.at("parent_checksum").get<std::uint64_t>() != head.parent_checksum_) {
    throw CheckpointError("head checkpoint: parent model checksum mismatch");
  }
  head.agent_ids_ = j.at("agent_ids").get<std::vector<std::string>>();
  head.trained_row_count_ = j.at("trained_row_count").get<int>();
  const auto& tombs = j.at("tombstoned");
  const auto& rows = j.at("agent_embeddings");
  const int n = static_cast<int>(head.agent_ids_.size());
  if (static_cast<int>(tombs.size()) != n || static_cast<int>(rows.size()) != n) {
    throw CheckpointError("head checkpoint: row count mismatch");
  }
  head.tombstoned_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    head.tombstoned_[static_cast<std::size_t>(i)] = tombs[static_cast<std::size_t>(i)].get<bool>() ? 1 : 0;
  }
  head.agent_embeddings_.resize(n, head.hidden_dim());
  for (int r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (static_cast<int>(row.size()) != head.hidden_dim()) {
      throw CheckpointError("head checkpoint: row width mismatch");
    }
    for (int c = 0; c < head.hidden_dim(); ++c) {
      head.agent_embeddings_(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  if (head.trained_row_count_ < 0 || head.trained_row_count_ > n) {
    throw CheckpointError("head checkpoint: invalid trained row count");
  }
  return head;
}

}  // namespace metaroute
