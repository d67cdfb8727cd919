#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "onerel/errors.hpp"
#include "onerel/model.hpp"
#include "onerel/synth.hpp"
#include "onerel/trainer.hpp"
#include "test_util.hpp"

using namespace onerel;
namespace fs = std::filesystem;

namespace {

Corpus small_corpus(int count, std::uint64_t seed = 3) {
  SynthConfig sc;
  sc.count = count;
  sc.num_relations = 3;
  sc.seed = seed;
  sc.min_length = 6;
  sc.max_length = 10;
  sc.token_pool = 40;
  return generate_synthetic(sc).corpus;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.dim = 6;
  c.hidden = 12;
  c.epochs = 3;
  c.learning_rate = 1e-2;
  c.batch_size = 4;
  return c;
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("derive_seed is deterministic and label sensitive") {
  CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
  CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
}

TEST_CASE("config validation and hash") {
  TrainConfig c;
  CHECK_NOTHROW(c.check());
  CHECK(c.hidden_dim() == 3 * c.dim);
  CHECK(c.learning_rate == 1e-5);
  CHECK(c.batch_size == 8);
  CHECK(c.dropout_rate == 0.1);
  CHECK(c.max_seq_len == 100);
  auto d = c;
  d.batch_size = 0;
  CHECK_THROWS_AS(d.check(), UsageError);
  d = c;
  d.learning_rate = -1;
  CHECK_THROWS_AS(d.check(), UsageError);
  d = c;
  d.dropout_rate = 1.0;
  CHECK_THROWS_AS(d.check(), UsageError);
  d = c;
  d.checkpoint_path = "/tmp/x";
  CHECK(d.hash() == c.hash());
  d.seed = 43;
  CHECK(d.hash() != c.hash());
}

TEST_CASE("batches of 10 sentences at size 4 are 4, 4, 2") {
  const auto corpus = small_corpus(10);
  const auto vocab = build_vocab(corpus.sentences, 1);
  const auto batches = make_batches(corpus.sentences, 3, vocab, 4, 17);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    int longest = 0;
    for (int r = 0; r < b.size(); ++r) {
      const auto& s = corpus.sentences[b.sentence_ids[r]];
      seen.insert(b.sentence_ids[r]);
      longest = std::max(longest, s.sentence.length());
      CHECK(b.lengths[r] == s.sentence.length());
      CHECK(b.masks[r].count() == static_cast<long>(b.lengths[r]) * b.lengths[r] * 3);
      CHECK(b.masks[r].padded_length() == b.padded_length());
      CHECK(b.gold[r] == encode(s, 3).matrix);
      for (int c = b.lengths[r]; c < b.padded_length(); ++c) CHECK(b.tokens(r, c) == Vocab::kPad);
      const auto idx = vocab.indices(s.sentence.tokens);
      CHECK(std::equal(idx.begin(), idx.end(), b.row(r).begin()));
    }
    CHECK(b.padded_length() == longest);
  }
  CHECK(seen.size() == 10);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 10);
  // Same seed, same order; a different seed reorders.
  const auto again = make_batches(corpus.sentences, 3, vocab, 4, 17);
  CHECK(again[0].sentence_ids == batches[0].sentence_ids);
  CHECK_THROWS_AS(make_batches({}, 3, vocab, 4, 1), UsageError);
}

TEST_CASE("Adam matches hand-computed bias-corrected steps") {
  std::vector<double> x{1.0, -2.0};
  std::vector<double> g{0.5, 0.0};
  AdamState state;
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  const ParamGroup group{"x", x, g};
  adam_step(std::span(&group, 1), state, cfg);
  // Step 1: m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps).
  CHECK(x[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-15));
  CHECK(x[1] == -2.0);

  g = {-1.0, 0.0};
  const ParamGroup group2{"x", x, g};
  const double before = x[0];
  adam_step(std::span(&group2, 1), state, cfg);
  const double m = 0.9 * 0.05 + 0.1 * -1.0;
  const double v = 0.999 * (0.001 * 0.25) + 0.001 * 1.0;
  const double m_hat = m / (1 - 0.9 * 0.9);
  const double v_hat = v / (1 - 0.999 * 0.999);
  CHECK(x[0] == doctest::Approx(before - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-14));
  CHECK(state.step == 2);
}

TEST_CASE("Adam minimises a quadratic") {
  std::vector<double> x{5.0, -3.0, 0.5};
  const std::vector<double> target{1.0, 2.0, -1.0};
  std::vector<double> grad(3);
  AdamState state;
  const AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
  for (int it = 0; it < 3000; ++it) {
    for (int n = 0; n < 3; ++n) grad[n] = 2 * (x[n] - target[n]);
    const ParamGroup group{"x", x, grad};
    adam_step(std::span(&group, 1), state, cfg);
  }
  for (int n = 0; n < 3; ++n) CHECK(x[n] == doctest::Approx(target[n]).epsilon(1e-3));
}

TEST_CASE("Adam refuses non-finite gradients without touching parameters") {
  std::vector<double> a{1.0}, b{2.0};
  std::vector<double> ga{0.1}, gb{std::nan("")};
  const std::vector<ParamGroup> groups{{"first", a, ga}, {"second", b, gb}};
  AdamState state;
  try {
    adam_step(groups, state, AdamConfig{});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("second") != std::string::npos);
  }
  CHECK(a[0] == 1.0);
  CHECK(b[0] == 2.0);
  CHECK(state.step == 0);
}

TEST_CASE("training is deterministic and lowers the loss") {
  const auto corpus = small_corpus(12);
  auto config = tiny_config();
  config.epochs = 8;
  const auto a = train(corpus, config);
  const auto b = train(corpus, config);
  CHECK(a.model.scorer.W == b.model.scorer.W);
  CHECK(a.model.embeddings.tokens == b.model.embeddings.tokens);
  REQUIRE(a.log.size() == 8);
  for (std::size_t e = 0; e < a.log.size(); ++e) CHECK(a.log[e].mean_loss == b.log[e].mean_loss);
  CHECK(a.log.back().mean_loss < a.log.front().mean_loss);
  config.seed = 99;
  CHECK(train(corpus, config).model.scorer.W != a.model.scorer.W);
}

TEST_CASE("epoch callback can stop training") {
  auto config = tiny_config();
  config.epochs = 10;
  int calls = 0;
  const auto r = train(small_corpus(6), config, [&](const EpochLog& log, const Model&) {
    ++calls;
    return log.epoch < 2;
  });
  CHECK(calls == 2);
  CHECK(r.log.size() == 2);
}

TEST_CASE("training writes a log and a checkpoint that reloads bit for bit") {
  const auto ckpt = temp("onerel_trainer_test.ckpt.json");
  const auto log = temp("onerel_trainer_test.log");
  auto config = tiny_config();
  config.checkpoint_path = ckpt;
  config.log_path = log;
  const auto corpus = small_corpus(8);
  const auto r = train(corpus, config);

  std::ifstream in(log);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch\tmean_loss\tseconds");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == config.epochs);

  const auto m = load_checkpoint(ckpt);
  CHECK(m.scorer.W == r.model.scorer.W);
  CHECK(m.scorer.b == r.model.scorer.b);
  CHECK(m.scorer.R == r.model.scorer.R);
  CHECK(m.embeddings.tokens == r.model.embeddings.tokens);
  CHECK(m.embeddings.positions == r.model.embeddings.positions);
  CHECK(m.vocab == r.model.vocab);
  CHECK(m.relations == r.model.relations);
  CHECK(m.config_hash == config.hash());
  for (const auto& s : corpus.sentences) {
    CHECK(predict(s.sentence, m).triples == predict(s.sentence, r.model).triples);
    CHECK(sentence_loss(s, m) == sentence_loss(s, r.model));
  }
  fs::remove(ckpt);
  fs::remove(log);
}

TEST_CASE("corrupt or missing checkpoints are data errors") {
  const auto path = temp("onerel_bad.ckpt.json");
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  {
    std::ofstream f(path);
    f << "{\"format\":\"onerel-checkpoint\",\"version\":99}";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  {
    std::ofstream f(path);
    f << "not json";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  fs::remove(path);
}

TEST_CASE("prediction truncates long sentences with a warning") {
  auto config = tiny_config();
  config.max_seq_len = 8;
  config.epochs = 1;
  const auto r = train(small_corpus(4), config);
  Sentence s{"long", {}};
  for (int i = 0; i < 12; ++i) s.tokens.push_back("w" + std::to_string(i));
  const auto p = predict(s, r.model);
  REQUIRE(p.warning.has_value());
  for (const auto& t : p.triples) {
    CHECK(t.head.end < 8);
    CHECK(t.tail.end < 8);
  }
  CHECK_FALSE(predict(Sentence{"short", {"a", "b"}}, r.model).warning.has_value());
}

TEST_CASE("empty corpus is rejected") {
  Corpus empty;
  empty.relations = RelationVocab({"r"});
  CHECK_THROWS_AS(train(empty, tiny_config()), DataError);
}
