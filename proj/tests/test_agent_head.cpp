#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "metaroute/agent_head.hpp"
#include "metaroute/prompts.hpp"

using namespace metaroute;
using namespace metaroute::testing;

namespace {

struct Fixture {
  Vocabulary vocab = Vocabulary::from_corpus(tiny_corpus());
  FrozenModel model = build_model(tiny_config(vocab, 21, 16, 4));
};

double nll_of(const Vector& h, int target, const AgentTokenHead& head) {
  const Vector p = extended_distribution(h, head, false);
  return -std::log(p[head.vocab_size() + target]);
}

}  // namespace

TEST_CASE("extend_head appends exactly one deterministic row") {
  Fixture f;
  AgentTokenHead empty(f.model);
  CHECK(empty.agent_count() == 0);

  const AgentTokenHead one = extend_head(empty, "AlphaAgent", 3);
  CHECK(one.agent_count() == 1);
  CHECK(one.agent_ids() == std::vector<std::string>{"AlphaAgent"});

  const AgentTokenHead again = extend_head(empty, "AlphaAgent", 3);
  CHECK(one.agent_checksum() == again.agent_checksum());

  const AgentTokenHead two = extend_head(one, "BetaAgent", 4);
  CHECK(two.agent_count() == 2);
  CHECK(Matrix(two.agent_embeddings().topRows(1)) == one.agent_embeddings());

  CHECK_THROWS_AS(extend_head(two, "AlphaAgent", 9), DuplicateAgent);
}

TEST_CASE("new rows start near the mean word embedding") {
  Fixture f;
  const AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  RowVector mean = RowVector::Zero(head.hidden_dim());
  for (Eigen::Index r = 0; r < head.word_head().rows(); ++r) mean += head.word_head().row(r);
  mean /= static_cast<double>(head.word_head().rows());
  const double dist = (head.agent_embeddings().row(0) - mean).norm();
  CHECK(dist > 0.0);
  CHECK(dist < 0.1 * std::sqrt(static_cast<double>(head.hidden_dim())));
}

TEST_CASE("masked extended distribution equals the base distribution bit for bit") {
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  head = extend_head(head, "BetaAgent", 4);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vector h(f.model.config().hidden_dim);
    for (int i = 0; i < h.size(); ++i) h[i] = dist(rng);
    const Vector base = base_distribution(h, f.model);
    const Vector masked = extended_distribution(h, head, true);
    CHECK(masked.size() == base.size() + 2);
    for (int i = 0; i < base.size(); ++i) CHECK(masked[i] == base[i]);
    CHECK(masked[base.size()] == 0.0);
    CHECK(masked[base.size() + 1] == 0.0);
  }
}

TEST_CASE("all-zero hidden vector gives a uniform extended distribution") {
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  const Vector p = extended_distribution(Vector::Zero(head.hidden_dim()), head, false);
  const double uniform = 1.0 / static_cast<double>(p.size());
  for (int i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(uniform).epsilon(1e-9));
}

TEST_CASE("extended distribution sums to one and rejects bad input") {
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> dist(0.0, 2.0);
  Vector h(head.hidden_dim());
  for (int i = 0; i < h.size(); ++i) h[i] = dist(rng);
  const Vector p = extended_distribution(h, head, false);
  CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
  CHECK_THROWS_AS(extended_distribution(Vector::Zero(head.hidden_dim() + 1), head, false), Error);
  Vector bad = h;
  bad[0] = std::nan("");
  CHECK_THROWS_AS(extended_distribution(bad, head, false), Error);
}

TEST_CASE("agent row tuned to the word mass takes exactly half the probability") {
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  const int d = head.hidden_dim();
  Vector h = Vector::Zero(d);
  h[0] = 1.0;

  const Vector word_logits = head.word_head() * h;
  RowVector row = RowVector::Zero(d);
  row[0] = log_sum_exp(word_logits);
  row[1] = 7.0;  // annihilated by h
  head.set_agent_row(0, row);

  const Vector p = extended_distribution(h, head, false);
  CHECK(p[head.vocab_size()] == doctest::Approx(0.5).epsilon(1e-12));

  const Matrix grad = token_gradient(h, 0, head);
  CHECK(grad(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(grad(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("near-one-hot target yields vanishing gradients") {
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  head = extend_head(head, "BetaAgent", 4);
  const int d = head.hidden_dim();
  Vector h = Vector::Zero(d);
  h[0] = 1.0;
  RowVector row = RowVector::Zero(d);
  row[0] = 60.0;
  head.set_agent_row(0, row);

  const Matrix grad = token_gradient(h, 0, head);
  CHECK(grad.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("token_gradient matches central finite differences") {
  Fixture f;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist(0.0, 1.0);
  const double step = 1e-5;

  for (int draw = 0; draw < 20; ++draw) {
    AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", draw);
    head = extend_head(head, "BetaAgent", draw + 100);
    head = extend_head(head, "GammaAgent", draw + 200);
    const int d = head.hidden_dim();
    for (int j = 0; j < head.agent_count(); ++j) {
      RowVector row(d);
      for (int c = 0; c < d; ++c) row[c] = dist(rng);
      head.set_agent_row(j, row);
    }
    Vector h(d);
    for (int c = 0; c < d; ++c) h[c] = dist(rng);
    const int target = static_cast<int>(rng() % 3);

    const Matrix analytic = token_gradient(h, target, head);
    for (int j = 0; j < head.agent_count(); ++j) {
      for (int c = 0; c < d; ++c) {
        AgentTokenHead plus = head;
        RowVector r = head.agent_embeddings().row(j);
        r[c] += step;
        plus.set_agent_row(j, r);
        AgentTokenHead minus = head;
        r[c] -= 2 * step;
        minus.set_agent_row(j, r);
        const double fd = (nll_of(h, target, plus) - nll_of(h, target, minus)) / (2 * step);
        const double rel =
            std::abs(analytic(j, c) - fd) / std::max(std::abs(fd), 1e-5);
        CHECK(rel <= 1e-4);
      }
    }
    CHECK_THROWS_AS(token_gradient(h, 3, head), Error);
    CHECK_THROWS_AS(token_gradient(h, -1, head), Error);
  }
}

TEST_CASE("train with zero epochs is a bit-exact no-op") {
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  DemonstrationSet demos("AlphaAgent");
  demos.add(Demonstration{"update the spreadsheet cell", ""}, Provenance::seed());

  TrainConfig cfg;
  cfg.epochs = 0;
  const auto before = head.agent_checksum();
  auto [trained, trace] = train(head, {demos}, f.model, f.vocab, cfg);
  CHECK(trained.agent_checksum() == before);
  CHECK(trace.epoch_mean_nll.empty());
  CHECK_FALSE(trained.trained());
}

TEST_CASE("train errors") {
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  TrainConfig cfg;

  DemonstrationSet unknown("GhostAgent");
  unknown.add(Demonstration{"anything", ""}, Provenance::seed());
  CHECK_THROWS_AS(train(head, {unknown}, f.model, f.vocab, cfg), UnknownAgent);

  CHECK_THROWS_AS(train(head, {}, f.model, f.vocab, cfg), Error);

  TrainConfig bad;
  bad.learning_rate = 0.0;
  DemonstrationSet demos("AlphaAgent");
  demos.add(Demonstration{"update the spreadsheet", ""}, Provenance::seed());
  CHECK_THROWS_AS(train(head, {demos}, f.model, f.vocab, bad), ConfigError);
}

TEST_CASE("single demonstration converges and matches an independent solver") {
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  const std::string task = "please update the spreadsheet cell formula";
  DemonstrationSet demos("AlphaAgent");
  demos.add(Demonstration{task, ""}, Provenance::seed());

  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.seed = 11;

  const RowVector w0 = head.agent_embeddings().row(0);
  auto [trained, trace] = train(head, {demos}, f.model, f.vocab, cfg);
  CHECK(static_cast<int>(trace.epoch_mean_nll.size()) == cfg.epochs);
  CHECK(trained.trained());

  const std::string prompt = render_router_prompt(task, "");
  const Vector h = f.model.encode(tokenize(prompt, f.vocab, f.model.config().max_context)).last();
  const Vector p = extended_distribution(h, trained, false);
  const double p_agent = p[trained.vocab_size()];
  CHECK(p_agent > 0.99);

  // Straight-line softmax regression on the same frozen features: one weight
  // vector, fixed word logits, AdamW updates written out longhand.
  const Vector word_logits = trained.word_head() * h;
  Vector w = w0.transpose();
  Vector m = Vector::Zero(w.size());
  Vector u = Vector::Zero(w.size());
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int step = 1; step <= cfg.epochs; ++step) {
    double mx = w.dot(h);
    for (int i = 0; i < word_logits.size(); ++i) mx = std::max(mx, word_logits[i]);
    double denom = std::exp(w.dot(h) - mx);
    for (int i = 0; i < word_logits.size(); ++i) denom += std::exp(word_logits[i] - mx);
    const double pj = std::exp(w.dot(h) - mx) / denom;
    const Vector grad = (pj - 1.0) * h;
    for (int c = 0; c < w.size(); ++c) {
      m[c] = b1 * m[c] + (1 - b1) * grad[c];
      u[c] = b2 * u[c] + (1 - b2) * grad[c] * grad[c];
      const double mhat = m[c] / (1 - std::pow(b1, step));
      const double uhat = u[c] / (1 - std::pow(b2, step));
      w[c] -= cfg.learning_rate * (mhat / (std::sqrt(uhat) + eps) + cfg.weight_decay * w[c]);
    }
  }
  double mx = w.dot(h);
  for (int i = 0; i < word_logits.size(); ++i) mx = std::max(mx, word_logits[i]);
  double denom = std::exp(w.dot(h) - mx);
  for (int i = 0; i < word_logits.size(); ++i) denom += std::exp(word_logits[i] - mx);
  const double p_oracle = std::exp(w.dot(h) - mx) / denom;

  CHECK(p_agent == doctest::Approx(p_oracle).epsilon(1e-6));
  CHECK((trained.agent_embeddings().row(0).transpose() - w).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("training never touches the frozen body or the word head") {
  Fixture f;
  const std::uint64_t model_sum = f.model.weight_checksum();
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  head = extend_head(head, "BetaAgent", 4);
  const std::uint64_t word_sum = head.word_head_checksum();

  DemonstrationSet a("AlphaAgent");
  a.add(Demonstration{"update the spreadsheet cell formula", ""}, Provenance::seed());
  a.add(Demonstration{"please update the spreadsheet totals", ""}, Provenance::seed());
  DemonstrationSet b("BetaAgent");
  b.add(Demonstration{"open the slide deck layout", ""}, Provenance::seed());
  b.add(Demonstration{"change the slide layout now", ""}, Provenance::seed());

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 1;
  auto [trained, trace] = train(head, {a, b}, f.model, f.vocab, cfg);

  CHECK(f.model.weight_checksum() == model_sum);
  CHECK(trained.word_head_checksum() == word_sum);
  CHECK(trained.word_head() == f.model.word_head());
  CHECK(static_cast<int>(trace.epoch_mean_nll.size()) == 5);
  CHECK(trace.epoch_mean_nll.back() < trace.epoch_mean_nll.front());
}

TEST_CASE("freeze_existing leaves earlier rows bit-identical") {
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  head = extend_head(head, "BetaAgent", 4);

  DemonstrationSet a("AlphaAgent");
  a.add(Demonstration{"update the spreadsheet cell formula", ""}, Provenance::seed());
  DemonstrationSet b("BetaAgent");
  b.add(Demonstration{"open the slide deck layout", ""}, Provenance::seed());

  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.seed = 2;
  auto [joint, trace1] = train(head, {a, b}, f.model, f.vocab, cfg);
  CHECK(joint.trained_row_count() == 2);

  AgentTokenHead plus = extend_head(joint, "GammaAgent", 5);
  DemonstrationSet c("GammaAgent");
  c.add(Demonstration{"route task words for the router", ""}, Provenance::seed());

  TrainConfig freeze = cfg;
  freeze.freeze_existing = true;
  auto [incremental, trace2] = train(plus, {a, b, c}, f.model, f.vocab, freeze);

  CHECK(Matrix(incremental.agent_embeddings().topRows(2)) ==
        Matrix(joint.agent_embeddings().topRows(2)));
  CHECK(Matrix(incremental.agent_embeddings().bottomRows(1)) !=
        Matrix(plus.agent_embeddings().bottomRows(1)));
  CHECK(incremental.trained_row_count() == 3);

  // without the flag, every row moves
  auto [rejoined, trace3] = train(plus, {a, b, c}, f.model, f.vocab, cfg);
  CHECK(Matrix(rejoined.agent_embeddings().topRows(2)) !=
        Matrix(joint.agent_embeddings().topRows(2)));
}

TEST_CASE("train is deterministic in its seed") {
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  head = extend_head(head, "BetaAgent", 4);
  DemonstrationSet a("AlphaAgent");
  a.add(Demonstration{"update the spreadsheet cell formula", ""}, Provenance::seed());
  a.add(Demonstration{"check the spreadsheet totals", ""}, Provenance::seed());
  DemonstrationSet b("BetaAgent");
  b.add(Demonstration{"open the slide deck layout", ""}, Provenance::seed());

  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 77;
  auto [t1, tr1] = train(head, {a, b}, f.model, f.vocab, cfg);
  auto [t2, tr2] = train(head, {a, b}, f.model, f.vocab, cfg);
  CHECK(t1.agent_checksum() == t2.agent_checksum());
  CHECK(tr1.epoch_mean_nll == tr2.epoch_mean_nll);

  cfg.seed = 78;
  auto [t3, tr3] = train(head, {a, b}, f.model, f.vocab, cfg);
  CHECK(t1.agent_checksum() != t3.agent_checksum());
}

TEST_CASE("trainable parameter count is rows times hidden dim") {
  Fixture f;
  AgentTokenHead head(f.model);
  for (int i = 0; i < 5; ++i) {
    head = extend_head(head, "Agent" + std::to_string(i), static_cast<std::uint64_t>(i));
  }
  CHECK(head.trainable_parameter_count() == 5 * f.model.config().hidden_dim);
}

TEST_CASE("head checkpoint round-trips bit-exactly and verifies its parent") {
  TempDir tmp;
  Fixture f;
  AgentTokenHead head = extend_head(AgentTokenHead(f.model), "AlphaAgent", 3);
  head = extend_head(head, "BetaAgent", 4);
  head.tombstone(1);

  DemonstrationSet a("AlphaAgent");
  a.add(Demonstration{"update the spreadsheet cell", ""}, Provenance::seed());
  TrainConfig cfg;
  cfg.epochs = 3;
  auto [trained, trace] = train(head, {a}, f.model, f.vocab, cfg);

  const auto path = tmp.path / "head.json";
  trained.save(path);
  const AgentTokenHead loaded = AgentTokenHead::load(path, f.model);
  CHECK(loaded.agent_checksum() == trained.agent_checksum());
  CHECK(loaded.agent_ids() == trained.agent_ids());
  CHECK(loaded.trained_row_count() == trained.trained_row_count());
  CHECK(loaded.is_tombstoned(1));

  const FrozenModel other = build_model(tiny_config(f.vocab, 999, 16, 4));
  CHECK_THROWS_AS(AgentTokenHead::load(path, other), CheckpointError);
}
