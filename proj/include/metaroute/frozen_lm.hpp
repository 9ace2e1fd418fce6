#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "metaroute/numeric.hpp"

namespace metaroute {

struct ModelConfig {
  int vocab_size = 0;
  int hidden_dim = 64;
  int n_layers = 2;
  int n_heads = 4;
  int max_context = 256;
  std::uint64_t seed = 0;

  int head_dim() const { return hidden_dim / n_heads; }
  void validate() const;
};

/// Word-token vocabulary. The first four ids are reserved for the specials
/// PAD, UNK, BOS, EOS; every other token is a lowercased word from the corpus.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  static Vocabulary from_corpus(const std::vector<std::string>& texts);
  static Vocabulary from_token_list(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  /// Id of a token, or -1 when absent.
  int id_of(std::string_view token) const;
  bool contains(std::string_view token) const { return id_of(token) >= 0; }
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line, id = line number.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  Vocabulary() = default;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Lowercases and splits on anything that is not an ASCII letter or digit.
std::vector<std::string> split_words(std::string_view text);

struct TokenSequence {
  std::vector<int> ids;
  bool truncated = false;

  int length() const { return static_cast<int>(ids.size()); }
};

/// BOS-prefixed id sequence; unknown words map to UNK, output is truncated to
/// max_context with the flag recorded.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_context);

struct HiddenStates {
  Matrix states;  // length x hidden_dim, one row per position

  Vector last() const { return states.row(states.rows() - 1).transpose(); }
};

/// A small causal transformer whose weights are drawn once from the config
/// seed and never change afterwards. Rebuilding with the same config yields
/// bit-identical weights; all inference entry points are const and safe for
/// concurrent use.
class FrozenModel {
 public:
  static FrozenModel build(const ModelConfig& config);

  const ModelConfig& config() const { return cfg_; }
  const Matrix& word_head() const { return word_head_; }

  HiddenStates encode(const TokenSequence& tokens) const;
  Vector base_distribution(const Vector& h) const;

  /// Checksum over every weight matrix, word head included.
  std::uint64_t weight_checksum() const;

  void save(const std::filesystem::path& path) const;
  static FrozenModel load(const std::filesystem::path& path);

 private:
  FrozenModel() = default;

  struct Layer {
    Matrix wq, wk, wv, wo;  // d x d
    Matrix w1;              // d x 4d
    Matrix w2;              // 4d x d
  };

  ModelConfig cfg_;
  Matrix tok_emb_;  // vocab_size x d
  Matrix pos_emb_;  // max_context x d
  std::vector<Layer> layers_;
  Matrix word_head_;  // vocab_size x d
};

inline FrozenModel build_model(const ModelConfig& config) { return FrozenModel::build(config); }

inline HiddenStates encode(const TokenSequence& tokens, const FrozenModel& model) {
  return model.encode(tokens);
}

inline Vector base_distribution(const Vector& h, const FrozenModel& model) {
  return model.base_distribution(h);
}

}  // namespace metaroute
