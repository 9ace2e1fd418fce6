#include "metaroute/frozen_lm.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <cstdlib>
#include <set>

#include <json.hpp>

namespace metaroute {

using nlohmann::ordered_json;

void ModelConfig::validate() const {
  if (vocab_size < 1 || hidden_dim < 1 || n_layers < 1 || n_heads < 1) {
    throw ConfigError("model config: all counts must be >= 1");
  }
  if (hidden_dim % n_heads != 0) {
    throw ConfigError("model config: hidden_dim must be divisible by n_heads");
  }
  if (max_context < 8) {
    throw ConfigError("model config: max_context must be >= 8");
  }
}

// ---------------------------------------------------------------------------
// Vocabulary

static const char* kSpecialTokens[4] = {"<pad>", "<unk>", "<bos>", "<eos>"};

Vocabulary Vocabulary::from_token_list(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (int i = 0; i < 4; ++i) {
    if (static_cast<int>(v.tokens_.size()) <= i || v.tokens_[i] != kSpecialTokens[i]) {
      throw ConfigError("vocabulary: first four ids must be the special tokens");
    }
  }
  for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) {
    auto [it, inserted] = v.ids_.emplace(v.tokens_[i], i);
    if (!inserted) throw ConfigError("vocabulary: duplicate token '" + v.tokens_[i] + "'");
  }
  return v;
}

Vocabulary Vocabulary::from_corpus(const std::vector<std::string>& texts) {
  std::set<std::string> words;
  for (const auto& text : texts) {
    for (auto& w : split_words(text)) words.insert(std::move(w));
  }
  std::vector<std::string> tokens;
  tokens.reserve(words.size() + 4);
  for (const char* s : kSpecialTokens) tokens.emplace_back(s);
  for (const auto& w : words) tokens.push_back(w);
  return from_token_list(std::move(tokens));
}

int Vocabulary::id_of(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("vocabulary: id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot open vocabulary file for writing: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open vocabulary file: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_token_list(std::move(tokens));
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_context) {
  TokenSequence seq;
  seq.ids.push_back(Vocabulary::kBos);
  for (const auto& word : split_words(text)) {
    const int id = vocab.id_of(word);
    seq.ids.push_back(id >= 0 ? id : Vocabulary::kUnk);
  }
  if (static_cast<int>(seq.ids.size()) > max_context) {
    seq.ids.resize(static_cast<std::size_t>(max_context));
    seq.truncated = true;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// FrozenModel

namespace {

Matrix gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                       double sigma) {
  std::normal_distribution<double> dist(0.0, sigma);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

}  // namespace

FrozenModel FrozenModel::build(const ModelConfig& config) {
  config.validate();
  FrozenModel m;
  m.cfg_ = config;
  const int d = config.hidden_dim;
  std::mt19937_64 rng(config.seed);

  // Token content dominates position so that contextual embeddings behave like
  // soft word identities; attention still mixes the prefix into every row.
  m.tok_emb_ = gaussian_matrix(rng, config.vocab_size, d, 1.0);
  m.pos_emb_ = gaussian_matrix(rng, config.max_context, d, 0.1);
  const double proj_sigma = 1.0 / std::sqrt(static_cast<double>(d));
  for (int l = 0; l < config.n_layers; ++l) {
    Layer layer;
    layer.wq = gaussian_matrix(rng, d, d, proj_sigma);
    layer.wk = gaussian_matrix(rng, d, d, proj_sigma);
    layer.wv = gaussian_matrix(rng, d, d, proj_sigma);
    // depth-scaled residual writes: the first layer's context mix dominates
    // the stream and deeper layers perturb it instead of scrambling it
    const double depth_scale = 1.0 / static_cast<double>(1 << (2 * l));
    layer.wo = gaussian_matrix(rng, d, d, 2.0 * proj_sigma * depth_scale);
    layer.w1 = gaussian_matrix(rng, d, 4 * d, proj_sigma);
    layer.w2 = gaussian_matrix(rng, 4 * d, d, depth_scale / std::sqrt(4.0 * d));
    m.layers_.push_back(std::move(layer));
  }
  m.word_head_ = gaussian_matrix(rng, config.vocab_size, d, proj_sigma);
  return m;
}

HiddenStates FrozenModel::encode(const TokenSequence& tokens) const {
  if (tokens.ids.empty()) throw Error("encode: empty token sequence");
  const int length = tokens.length();
  if (length > cfg_.max_context) throw Error("encode: sequence exceeds max_context");
  for (int id : tokens.ids) {
    if (id < 0 || id >= cfg_.vocab_size) throw Error("encode: token id out of range");
  }

  const int d = cfg_.hidden_dim;
  const int n_heads = cfg_.n_heads;
  const int dh = cfg_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Every position is computed with the same fixed sequence of row operations,
  // so row p never depends on later tokens and prefixes reproduce bit-exactly.
  Matrix x(length, d);
  for (int p = 0; p < length; ++p) {
    x.row(p) = tok_emb_.row(tokens.ids[static_cast<std::size_t>(p)]) + pos_emb_.row(p);
  }

  for (const Layer& layer : layers_) {
    Matrix a(length, d);
    for (int p = 0; p < length; ++p) a.row(p) = layer_norm_row(x.row(p));
    Matrix q(length, d), k(length, d), v(length, d);
    for (int p = 0; p < length; ++p) {
      q.row(p) = a.row(p) * layer.wq;
      k.row(p) = a.row(p) * layer.wk;
      v.row(p) = a.row(p) * layer.wv;
    }
    Matrix attn(length, d);
    std::vector<double> weights(static_cast<std::size_t>(length));
    for (int p = 0; p < length; ++p) {
      for (int h = 0; h < n_heads; ++h) {
        const int base = h * dh;
        // per-head linear distance penalty; near heads track the local
        // context, far heads keep a view of the whole prefix
        double slope_base = 0.125;
        int global_heads = 1;
        if (const char* e = std::getenv("METAROUTE_SLOPE_BASE")) slope_base = atof(e);
        if (const char* e = std::getenv("METAROUTE_GLOBAL_HEADS")) global_heads = atoi(e);
        const double slope =
            (h >= n_heads - global_heads) ? 0.0 : slope_base / static_cast<double>(1 << h);
        double mx = kNegInf;
        for (int j = 0; j <= p; ++j) {
          double s = 0.0;
          for (int c = 0; c < dh; ++c) s += q(p, base + c) * k(j, base + c);
          s = s * scale - slope * static_cast<double>(p - j);
          weights[static_cast<std::size_t>(j)] = s;
          if (s > mx) mx = s;
        }
        double sum = 0.0;
        for (int j = 0; j <= p; ++j) {
          auto& w = weights[static_cast<std::size_t>(j)];
          w = std::exp(w - mx);
          sum += w;
        }
        for (int c = 0; c < dh; ++c) {
          double acc = 0.0;
          for (int j = 0; j <= p; ++j) acc += weights[static_cast<std::size_t>(j)] * v(j, base + c);
          attn(p, base + c) = acc / sum;
        }
      }
    }
    for (int p = 0; p < length; ++p) {
      const RowVector mixed = attn.row(p) * layer.wo;
      x.row(p) += mixed;
    }
    for (int p = 0; p < length; ++p) {
      const RowVector normed = layer_norm_row(x.row(p));
      RowVector hidden = normed * layer.w1;
      for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden[i] = std::tanh(hidden[i]);
      const RowVector out = hidden * layer.w2;
      x.row(p) += out;
    }
  }
  for (int p = 0; p < length; ++p) x.row(p) = layer_norm_row(x.row(p));
  return HiddenStates{std::move(x)};
}

Vector FrozenModel::base_distribution(const Vector& h) const {
  if (h.size() != cfg_.hidden_dim) throw Error("base_distribution: hidden vector has wrong size");
  if (!all_finite(h)) throw Error("base_distribution: non-finite hidden vector");
  const Vector logits = word_head_ * h;
  return softmax(logits);
}

std::uint64_t FrozenModel::weight_checksum() const {
  std::uint64_t h = kFnvOffsetBasis;
  h = checksum(tok_emb_, h);
  h = checksum(pos_emb_, h);
  for (const Layer& layer : layers_) {
    h = checksum(layer.wq, h);
    h = checksum(layer.wk, h);
    h = checksum(layer.wv, h);
    h = checksum(layer.wo, h);
    h = checksum(layer.w1, h);
    h = checksum(layer.w2, h);
  }
  h = checksum(word_head_, h);
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

ordered_json matrix_to_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const ordered_json& j, Eigen::Index rows, Eigen::Index cols,
                        const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw CheckpointError(std::string("checkpoint: bad row count for ") + what);
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw CheckpointError(std::string("checkpoint: bad column count for ") + what);
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

void FrozenModel::save(const std::filesystem::path& path) const {
  ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "frozen_model";
  j["config"] = {{"vocab_size", cfg_.vocab_size},   {"hidden_dim", cfg_.hidden_dim},
                 {"n_layers", cfg_.n_layers},       {"n_heads", cfg_.n_heads},
                 {"max_context", cfg_.max_context}, {"seed", cfg_.seed}};
  j["weights"]["tok_emb"] = matrix_to_json(tok_emb_);
  j["weights"]["pos_emb"] = matrix_to_json(pos_emb_);
  ordered_json layers = ordered_json::array();
  for (const Layer& layer : layers_) {
    ordered_json lj;
    lj["wq"] = matrix_to_json(layer.wq);
    lj["wk"] = matrix_to_json(layer.wk);
    lj["wv"] = matrix_to_json(layer.wv);
    lj["wo"] = matrix_to_json(layer.wo);
    lj["w1"] = matrix_to_json(layer.w1);
    lj["w2"] = matrix_to_json(layer.w2);
    layers.push_back(std::move(lj));
  }
  j["weights"]["layers"] = std::move(layers);
  j["weights"]["word_head"] = matrix_to_json(word_head_);

  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot open model checkpoint for writing: " + path.string());
  out << j.dump(2) << '\n';
}

FrozenModel FrozenModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open model checkpoint: " + path.string());
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("model checkpoint parse error: ") + e.what());
  }
  if (j.value("format_version", 0) != 1 || j.value("kind", "") != "frozen_model") {
    throw CheckpointError("model checkpoint: unsupported format");
  }
  ModelConfig cfg;
  const auto& cj = j.at("config");
  cfg.vocab_size = cj.at("vocab_size").get<int>();
  cfg.hidden_dim = cj.at("hidden_dim").get<int>();
  cfg.n_layers = cj.at("n_layers").get<int>();
  cfg.n_heads = cj.at("n_heads").get<int>();
  cfg.max_context = cj.at("max_context").get<int>();
  cfg.seed = cj.at("seed").get<std::uint64_t>();
  cfg.validate();

  FrozenModel m;
  m.cfg_ = cfg;
  const int d = cfg.hidden_dim;
  const auto& w = j.at("weights");
  m.tok_emb_ = matrix_from_json(w.at("tok_emb"), cfg.vocab_size, d, "tok_emb");
  m.pos_emb_ = matrix_from_json(w.at("pos_emb"), cfg.max_context, d, "pos_emb");
  const auto& layers = w.at("layers");
  if (static_cast<int>(layers.size()) != cfg.n_layers) {
    throw CheckpointError("model checkpoint: layer count mismatch");
  }
  for (const auto& lj : layers) {
    Layer layer;
    layer.wq = matrix_from_json(lj.at("wq"), d, d, "wq");
    layer.wk = matrix_from_json(lj.at("wk"), d, d, "wk");
    layer.wv = matrix_from_json(lj.at("wv"), d, d, "wv");
    layer.wo = matrix_from_json(lj.at("wo"), d, d, "wo");
    layer.w1 = matrix_from_json(lj.at("w1"), d, 4 * d, "w1");
    layer.w2 = matrix_from_json(lj.at("w2"), 4 * d, d, "w2");
    m.layers_.push_back(std::move(layer));
  }
  m.word_head_ = matrix_from_json(w.at("word_head"), cfg.vocab_size, d, "word_head");
  return m;
}

}  // namespace metaroute
