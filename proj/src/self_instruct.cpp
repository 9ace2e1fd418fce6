#include "metaroute/self_instruct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace metaroute {

using nlohmann::ordered_json;

void FilterConfig::validate() const {
  if (!(tau1 > 0.0 && tau1 < 1.0)) throw ConfigError("filter config: tau1 must be in (0,1)");
  if (!(tau2 > 0.0 && tau2 <= 1.0)) throw ConfigError("filter config: tau2 must be in (0,1]");
  if (!(tau1 < tau2)) throw ConfigError("filter config: tau1 must be < tau2");
  if (target_size < 0) throw ConfigError("filter config: target_size must be >= 0");
  if (max_rounds < 0) throw ConfigError("filter config: max_rounds must be >= 0");
}

// ---------------------------------------------------------------------------
// DemonstrationSet

namespace {

std::string dedupe_key(const Demonstration& d) {
  return d.task_text + '\x1f' + d.state_text;
}

}  // namespace

bool DemonstrationSet::add(Demonstration item, Provenance p) {
  if (item.task_text.empty()) throw Error("demonstration: empty task_text");
  if (!keys_.insert(dedupe_key(item)).second) return false;
  items_.push_back(std::move(item));
  provenance_.push_back(p);
  return true;
}

bool DemonstrationSet::contains(const Demonstration& item) const {
  return keys_.count(dedupe_key(item)) > 0;
}

void DemonstrationSet::save_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot open demonstration file for writing: " + path.string());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    ordered_json j;
    j["task_text"] = items_[i].task_text;
    j["state_text"] = items_[i].state_text;
    if (provenance_[i].is_seed) {
      j["provenance"] = "seed";
    } else {
      j["provenance"] = "generated";
      j["round"] = provenance_[i].round;
    }
    out << j.dump() << '\n';
  }
}

DemonstrationSet DemonstrationSet::load_jsonl(std::string agent_id,
                                              const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open demonstration file: " + path.string());
  DemonstrationSet set(std::move(agent_id));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw CheckpointError("demonstration file " + path.string() + " line " +
                            std::to_string(line_no) + ": " + e.what());
    }
    Demonstration d{j.at("task_text").get<std::string>(), j.value("state_text", "")};
    Provenance p = j.value("provenance", "seed") == "seed"
                       ? Provenance::seed()
                       : Provenance::generated(j.value("round", 0));
    set.add(std::move(d), p);
  }
  return set;
}

DemonstrationSet seed_set(const AgentDocument& doc) {
  DemonstrationSet set(doc.name);
  for (const auto& stub : doc.demonstrations) {
    set.add(Demonstration{stub.text, stub.state_text}, Provenance::seed());
  }
  return set;
}

// ---------------------------------------------------------------------------
// Similarity

const Matrix& SimilarityScorer::embeddings(const std::string& text) {
  auto it = cache_.find(text);
  if (it != cache_.end()) return it->second;
  const TokenSequence tokens = tokenize(text, *vocab_, model_->config().max_context);
  Matrix m = model_->encode(tokens).states;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (norm > 0.0) m.row(r) /= norm;
  }
  return cache_.emplace(text, std::move(m)).first->second;
}

double SimilarityScorer::score_texts(const std::string& a, const std::string& b) {
  if (a.empty() || b.empty()) throw Error("similarity: empty task text");
  const Matrix& ea = embeddings(a);
  const Matrix& eb = embeddings(b);

  // Greedy matching: every token takes its best cosine on the other side.
  double recall = 0.0;
  for (Eigen::Index i = 0; i < ea.rows(); ++i) {
    double best = -1.0;
    for (Eigen::Index j = 0; j < eb.rows(); ++j) {
      const double c = ea.row(i).dot(eb.row(j));
      if (c > best) best = c;
    }
    recall += best;
  }
  recall /= static_cast<double>(ea.rows());

  double precision = 0.0;
  for (Eigen::Index j = 0; j < eb.rows(); ++j) {
    double best = -1.0;
    for (Eigen::Index i = 0; i < ea.rows(); ++i) {
      const double c = eb.row(j).dot(ea.row(i));
      if (c > best) best = c;
    }
    precision += best;
  }
  precision /= static_cast<double>(eb.rows());

  const double denom = precision + recall;
  if (denom == 0.0) return 0.0;
  return 2.0 * precision * recall / denom;
}

double SimilarityScorer::operator()(const Demonstration& a, const Demonstration& b) {
  return score_texts(a.task_text, b.task_text);
}

double similarity(const Demonstration& a, const Demonstration& b, const FrozenModel& model,
                  const Vocabulary& vocab) {
  SimilarityScorer scorer(model, vocab);
  return scorer(a, b);
}

// ---------------------------------------------------------------------------
// Greedy band filter

std::vector<Demonstration> greedy_filter(const std::vector<Demonstration>& candidates,
                                         const DemonstrationSet& existing,
                                         const FilterConfig& cfg, SimilarityScorer& scorer) {
  cfg.validate();
  const std::size_t m = candidates.size();
  if (m == 0) return {};

  // Priority: distance to the nearer threshold, aggregated over the existing
  // set (min by default). Empty existing set degenerates to input order.
  std::vector<double> priority(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (existing.size() == 0) break;
    double agg = cfg.aggregation == FilterConfig::Aggregation::Min
                     ? std::numeric_limits<double>::infinity()
                     : 0.0;
    for (std::size_t k = 0; k < existing.size(); ++k) {
      const double s = scorer(candidates[i], existing.at(k));
      const double dist = std::min(std::abs(s - cfg.tau1), std::abs(s - cfg.tau2));
      if (cfg.aggregation == FilterConfig::Aggregation::Min) {
        agg = std::min(agg, dist);
      } else {
        agg += dist;
      }
    }
    if (cfg.aggregation == FilterConfig::Aggregation::Mean) {
      agg /= static_cast<double>(existing.size());
    }
    priority[i] = agg;
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return priority[a] > priority[b]; });

  std::vector<Demonstration> accepted;
  for (std::size_t idx : order) {
    const Demonstration& cand = candidates[idx];
    bool valid = true;
    for (std::size_t k = 0; k < existing.size() && valid; ++k) {
      const double s = scorer(cand, existing.at(k));
      if (s < cfg.tau1 || s > cfg.tau2) valid = false;
    }
    for (std::size_t k = 0; k < accepted.size() && valid; ++k) {
      const double s = scorer(cand, accepted[k]);
      if (s < cfg.tau1 || s > cfg.tau2) valid = false;
    }
    if (valid) accepted.push_back(cand);
  }
  return accepted;
}

std::vector<Demonstration> greedy_filter(const std::vector<Demonstration>& candidates,
                                         const DemonstrationSet& existing,
                                         const FilterConfig& cfg, const FrozenModel& model,
                                         const Vocabulary& vocab) {
  SimilarityScorer scorer(model, vocab);
  return greedy_filter(candidates, existing, cfg, scorer);
}

// ---------------------------------------------------------------------------
// Generation

std::vector<Demonstration> generate_round(const DemonstrationSet& set, const AgentDocument& doc,
                                          Generator& gen, int n, int round) {
  if (set.empty()) throw Error("generate_round: seed set is empty");
  if (n <= 0) return {};

  std::vector<Demonstration> raw;
  try {
    raw = gen.generate(set, doc.capabilities, n);
  } catch (const std::exception& e) {
    throw GenerationFailed(round, e.what());
  }
  if (static_cast<int>(raw.size()) > n) raw.resize(static_cast<std::size_t>(n));

  std::vector<Demonstration> out;
  std::set<std::string> seen;
  for (auto& cand : raw) {
    if (cand.task_text.empty()) continue;
    if (set.contains(cand)) continue;
    if (!seen.insert(dedupe_key(cand)).second) continue;
    out.push_back(std::move(cand));
  }
  return out;
}

DemonstrationSet bootstrap(const AgentDocument& doc, Generator& gen, const FilterConfig& cfg,
                           const FrozenModel& model, const Vocabulary& vocab) {
  cfg.validate();
  if (doc.demonstrations.empty()) throw Error("bootstrap: document has no seed demonstrations");

  DemonstrationSet set = seed_set(doc);
  if (static_cast<int>(set.size()) >= cfg.target_size) return set;

  SimilarityScorer scorer(model, vocab);
  int zero_rounds = 0;
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    const int remaining = cfg.target_size - static_cast<int>(set.size());
    if (remaining <= 0) break;
    const int request = std::max(8, 2 * remaining);
    const auto candidates = generate_round(set, doc, gen, request, round);
    const auto accepted = greedy_filter(candidates, set, cfg, scorer);
    int added = 0;
    for (const auto& item : accepted) {
      if (set.add(item, Provenance::generated(round))) ++added;
    }
    if (added == 0) {
      if (++zero_rounds >= 3) throw StalledBootstrap(doc.name, std::move(set));
    } else {
      zero_rounds = 0;
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// ReferenceGenerator

namespace {

const std::vector<std::pair<std::string, std::string>>& paraphrase_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"please", "kindly"}, {"can", "could"},    {"make", "create"},  {"add", "insert"},
      {"remove", "delete"}, {"show", "display"}, {"open", "launch"},  {"change", "adjust"},
      {"set", "configure"}, {"check", "verify"}, {"find", "locate"},  {"update", "refresh"},
      {"help", "assist"},   {"my", "the"},       {"want", "need"},    {"new", "fresh"},
  };
  return table;
}

const std::set<std::string>& keyword_stopwords() {
  static const std::set<std::string> stop = {
      "the", "a",  "an",  "and", "or",  "of",    "in",  "on",  "to",   "for",  "with",
      "using", "it", "its", "is",  "are", "can",   "cannot", "also", "such", "as",  "this",
      "that",  "by", "be",  "at",  "not", "tasks", "task"};
  return stop;
}

}  // namespace

ReferenceGenerator::ReferenceGenerator(std::uint64_t seed) : seed_(seed) {}

const std::vector<std::string>& ReferenceGenerator::paraphrase_words() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> out;
    for (const auto& [a, b] : paraphrase_table()) {
      out.push_back(a);
      out.push_back(b);
    }
    out.insert(out.end(), {"for", "me", "please", "now"});
    return out;
  }();
  return words;
}

std::vector<Demonstration> ReferenceGenerator::generate(const DemonstrationSet& seeds,
                                                        const std::string& capability_text,
                                                        int n) {
  if (seeds.empty() || n <= 0) return {};
  std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ull * ++calls_));

  std::vector<std::string> keywords;
  {
    std::set<std::string> seen;
    for (const auto& w : split_words(capability_text)) {
      if (keyword_stopwords().count(w)) continue;
      if (seen.insert(w).second) keywords.push_back(w);
    }
  }

  auto pick = [&rng](std::size_t bound) {
    return static_cast<std::size_t>(rng() % std::max<std::size_t>(1, bound));
  };

  std::vector<Demonstration> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Demonstration& base = seeds.at(pick(seeds.size()));
    std::vector<std::string> words = split_words(base.task_text);
    std::string state = base.state_text;

    // recombine with a second seed half the time
    if (seeds.size() > 1 && rng() % 2 == 0) {
      const Demonstration& other = seeds.at(pick(seeds.size()));
      const auto other_words = split_words(other.task_text);
      const std::size_t keep = words.size() / 2 + 1;
      words.resize(std::min(words.size(), keep));
      const std::size_t from = other_words.size() / 2;
      for (std::size_t k = from; k < other_words.size(); ++k) words.push_back(other_words[k]);
      if (rng() % 2 == 0) state = other.state_text;
    }

    for (auto& w : words) {
      if (rng() % 2) continue;
      for (const auto& [a, b] : paraphrase_table()) {
        if (w == a) {
          w = b;
          break;
        }
        if (w == b) {
          w = a;
          break;
        }
      }
    }

    if (!keywords.empty() && rng() % 2 == 0) {
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(pick(words.size() + 1)),
                   keywords[pick(keywords.size())]);
    }
    if (words.size() > 4 && rng() % 4 == 0) {
      words.erase(words.begin() + static_cast<std::ptrdiff_t>(1 + pick(words.size() - 2)));
    }
    if (rng() % 4 == 0) words.insert(words.begin(), rng() % 2 ? "please" : "now");
    if (rng() % 4 == 0) {
      words.push_back("for");
      words.push_back("me");
    }

    std::string text;
    for (std::size_t k = 0; k < words.size(); ++k) {
      if (k > 0) text += ' ';
      text += words[k];
    }
    if (text.empty()) continue;
    out.push_back(Demonstration{std::move(text), std::move(state)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration

ScoreStats score_distribution(const DemonstrationSet& set, SimilarityScorer& scorer) {
  std::vector<double> scores;
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = i + 1; j < set.size(); ++j) {
      scores.push_back(scorer(set.at(i), set.at(j)));
    }
  }
  ScoreStats stats;
  stats.pairs = static_cast<int>(scores.size());
  if (scores.empty()) return stats;
  std::sort(scores.begin(), scores.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(scores.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(scores.size() - 1, lo + 1);
    const double frac = pos - static_cast<double>(lo);
    return scores[lo] * (1.0 - frac) + scores[hi] * frac;
  };
  stats.min = scores.front();
  stats.max = scores.back();
  stats.mean = std::accumulate(scores.begin(), scores.end(), 0.0) /
               static_cast<double>(scores.size());
  stats.p05 = quantile(0.05);
  stats.p25 = quantile(0.25);
  stats.median = quantile(0.50);
  stats.p75 = quantile(0.75);
  stats.p95 = quantile(0.95);
  return stats;
}

}  // namespace metaroute
