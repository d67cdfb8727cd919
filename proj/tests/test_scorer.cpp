#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "onerel/errors.hpp"
#include "onerel/scorer.hpp"
#include "oracles.hpp"

using namespace onerel;
using namespace onerel::testing;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ScorerParams random_params(int d, int h, int K, std::mt19937_64& rng) {
  ScorerParams p = ScorerParams::zeros(d, h, K);
  p.W = random_matrix(h, 2 * d, rng, 0.7);
  p.b = random_matrix(h, 1, rng, 0.3);
  p.R = random_matrix(h, 4 * K, rng, 0.7);
  return p;
}

TagMatrix random_gold(int L, int K, std::mt19937_64& rng) {
  TagMatrix g(L, K);
  for (int i = 0; i < L; ++i)
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < L; ++j) g.set({i, k, j}, static_cast<Tag>(rng() % 4));
  return g;
}

}  // namespace

TEST_CASE("initialisation shapes and ranges") {
  const auto p = ScorerParams::init(4, 12, 3, 0.1, 5);
  CHECK(p.W.rows() == 12);
  CHECK(p.W.cols() == 8);
  CHECK(p.b.isZero());
  CHECK(p.R.cols() == 12);
  CHECK(p.W.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 20.0));
  CHECK(p.R.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 24.0));
  CHECK(p.num_relations() == 3);
  auto bad = p;
  bad.dropout_rate = 1.0;
  CHECK_THROWS_AS(bad.check(), UsageError);
  bad = p;
  bad.W(0, 0) = std::nan("");
  CHECK_THROWS_AS(bad.check(), NumericError);
}

TEST_CASE("pair grid matches the per-cell formula") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int L = 1 + static_cast<int>(rng() % 6);
    const int K = 1 + static_cast<int>(rng() % 3);
    const auto p = random_params(5, 7, K, rng);
    const auto emb = random_matrix(L, 5, rng);
    const auto grid = score_all(emb, p, false, 0);
    REQUIRE(grid.scores.rows() == 4 * K);
    REQUIRE(grid.scores.cols() == L * L);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) {
        const auto v = naive_pair_scores(emb, p, i, j);
        for (int o = 0; o < 4 * K; ++o)
          REQUIRE(grid.scores(o, grid.pair(i, j)) == doctest::Approx(v(o)).epsilon(1e-12));
      }
  }
}

TEST_CASE("head and tail roles are not symmetric") {
  std::mt19937_64 rng(2);
  const auto p = random_params(4, 6, 1, rng);
  const auto emb = random_matrix(3, 4, rng);
  const auto grid = score_all(emb, p, false, 0);
  CHECK((grid.scores.col(grid.pair(0, 2)) - grid.scores.col(grid.pair(2, 0))).norm() > 1e-6);
}

TEST_CASE("tag distribution is a per-cell softmax") {
  std::mt19937_64 rng(3);
  const auto p = random_params(3, 5, 2, rng);
  const auto emb = random_matrix(4, 3, rng);
  const auto grid = score_all(emb, p, false, 0);
  const auto probs = tag_distribution(grid);
  for (Eigen::Index c = 0; c < probs.cols(); ++c)
    for (int k = 0; k < 2; ++k) {
      double z = 0;
      for (int t = 0; t < 4; ++t) z += std::exp(grid.scores(4 * k + t, c));
      double sum = 0;
      for (int t = 0; t < 4; ++t) {
        CHECK(probs(4 * k + t, c) == doctest::Approx(std::exp(grid.scores(4 * k + t, c)) / z).epsilon(1e-12));
        sum += probs(4 * k + t, c);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("loss matches the scalar oracle, with and without masked relations") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int L = 1 + static_cast<int>(rng() % 5);
    const int K = 2 + static_cast<int>(rng() % 2);
    const auto p = random_params(4, 6, K, rng);
    const auto emb = random_matrix(L, 4, rng);
    const auto gold = random_gold(L, K, rng);
    const auto grid = score_all(emb, p, false, 0);
    CellMask mask(L, K);
    std::vector<bool> rel(K, true);
    CHECK(loss(grid, gold, mask) == doctest::Approx(naive_loss(emb, p, gold, L, rel)).epsilon(1e-12));
    mask.set_relation(1, false);
    rel[1] = false;
    CHECK(mask.count() == static_cast<long>(L) * L * (K - 1));
    CHECK(loss(grid, gold, mask) == doctest::Approx(naive_loss(emb, p, gold, L, rel)).epsilon(1e-12));
  }
}

TEST_CASE("zero parameters give ln 4") {
  std::mt19937_64 rng(5);
  const auto p = ScorerParams::zeros(3, 4, 2);
  for (int trial = 0; trial < 10; ++trial) {
    const int L = 1 + static_cast<int>(rng() % 7);
    const auto emb = random_matrix(L, 3, rng);
    const auto grid = score_all(emb, p, false, 0);
    CHECK(std::abs(loss(grid, random_gold(L, 2, rng), CellMask(L, 2)) - std::log(4.0)) <= 1e-12);
  }
}

TEST_CASE("loss errors") {
  const auto p = ScorerParams::zeros(2, 2, 1);
  const auto grid = score_all(Eigen::MatrixXd::Zero(2, 2), p, false, 0);
  CellMask mask(2, 1);
  mask.set_relation(0, false);
  CHECK_THROWS_AS(loss(grid, TagMatrix(2, 1), mask), UsageError);
  CHECK_THROWS_AS(loss(grid, TagMatrix(2, 2), CellMask(2, 1)), UsageError);
  CHECK_THROWS_AS(loss(grid, TagMatrix(3, 1), CellMask(2, 1)), UsageError);
  CHECK_THROWS_AS(score_all(Eigen::MatrixXd::Zero(2, 3), p, false, 0), UsageError);
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const int L = 3, K = 2, d = 4, h = 6;
    auto p = random_params(d, h, K, rng);
    Eigen::MatrixXd emb = random_matrix(L, d, rng);
    const auto gold = random_gold(L, K, rng);
    const CellMask mask(L, K);
    const auto f = [&] { return loss(score_all(emb, p, false, 0), gold, mask); };
    const auto grid = score_all(emb, p, false, 0);
    const auto g = backward(grid, gold, mask, emb, p);
    CHECK(worst_fd_error(p.W, g.W, f) < 1e-4);
    CHECK(worst_fd_error(p.b, g.b, f) < 1e-4);
    CHECK(worst_fd_error(p.R, g.R, f) < 1e-4);
    CHECK(worst_fd_error(emb, g.emb, f) < 1e-4);
  }
}

TEST_CASE("gradients with a fixed dropout mask match central differences") {
  std::mt19937_64 rng(7);
  auto p = random_params(3, 8, 2, rng);
  p.dropout_rate = 0.3;
  Eigen::MatrixXd emb = random_matrix(3, 3, rng);
  const auto gold = random_gold(3, 2, rng);
  const CellMask mask(3, 2);
  const auto f = [&] { return loss(score_all(emb, p, true, 77), gold, mask); };
  const auto grid = score_all(emb, p, true, 77);
  REQUIRE(grid.dropout_mask.size() > 0);
  CHECK((grid.dropout_mask.array() == 0.0).any());
  const auto g = backward(grid, gold, mask, emb, p);
  CHECK(worst_fd_error(p.W, g.W, f) < 1e-4);
  CHECK(worst_fd_error(p.b, g.b, f) < 1e-4);
  CHECK(worst_fd_error(p.R, g.R, f) < 1e-4);
  CHECK(worst_fd_error(emb, g.emb, f) < 1e-4);
}

TEST_CASE("masked relations receive no gradient") {
  std::mt19937_64 rng(8);
  const auto p = random_params(4, 5, 3, rng);
  const auto emb = random_matrix(3, 4, rng);
  const auto gold = random_gold(3, 3, rng);
  CellMask mask(3, 3);
  mask.set_relation(2, false);
  const auto g = backward(score_all(emb, p, false, 0), gold, mask, emb, p);
  CHECK(g.R.middleCols(8, 4).isZero());
  CHECK_FALSE(g.R.leftCols(8).isZero());
}

TEST_CASE("padding cells change neither loss nor gradients") {
  std::mt19937_64 rng(9);
  const auto p = random_params(4, 6, 2, rng);
  const Eigen::MatrixXd emb = random_matrix(3, 4, rng);
  const auto gold = random_gold(3, 2, rng);
  const auto base = score_all(emb, p, false, 0);
  const double l3 = loss(base, gold, CellMask(3, 2));
  const auto g3 = backward(base, gold, CellMask(3, 2), emb, p);
  for (int padded : {4, 7}) {
    Eigen::MatrixXd big = random_matrix(padded, 4, rng);
    big.topRows(3) = emb;
    const auto grid = score_all(big, p, false, 0);
    const CellMask mask(padded, 3, 2);
    CHECK(std::abs(loss(grid, gold, mask) - l3) <= 1e-12);
    const auto g = backward(grid, gold, mask, big, p);
    CHECK((g.W - g3.W).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((g.R - g3.R).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(g.emb.bottomRows(padded - 3).isZero());
  }
}

TEST_CASE("backward rejects a stale grid") {
  std::mt19937_64 rng(10);
  const auto p = random_params(4, 6, 2, rng);
  const auto emb = random_matrix(3, 4, rng);
  const auto grid = score_all(emb, p, false, 0);
  const auto other = random_params(4, 5, 2, rng);
  CHECK_THROWS_AS(backward(grid, TagMatrix(3, 2), CellMask(3, 2), emb, other), UsageError);
  CHECK_THROWS_AS(backward(grid, TagMatrix(3, 2), CellMask(3, 2), random_matrix(2, 4, rng), p),
                  UsageError);
}

TEST_CASE("prediction is argmax, shift invariant, and NONE on ties") {
  std::mt19937_64 rng(11);
  const auto p = random_params(4, 6, 2, rng);
  const auto emb = random_matrix(5, 4, rng);
  auto grid = score_all(emb, p, false, 0);
  const CellMask mask(5, 2);
  const auto tags = predict_tags(grid, mask);
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < 5; ++j) {
        int best = 0;
        for (int t = 1; t < 4; ++t)
          if (grid.scores(4 * k + t, grid.pair(i, j)) > grid.scores(4 * k + best, grid.pair(i, j)))
            best = t;
        CHECK(tags.get(i, k, j) == static_cast<Tag>(best));
      }
  auto shifted = grid;
  std::normal_distribution<double> n(0.0, 10.0);
  for (Eigen::Index c = 0; c < shifted.scores.cols(); ++c)
    for (int k = 0; k < 2; ++k) shifted.scores.col(c).segment<4>(4 * k).array() += n(rng);
  CHECK(predict_tags(shifted, mask) == tags);

  ScoreGrid tie;
  tie.length = 1;
  tie.num_relations = 1;
  tie.scores = Eigen::MatrixXd(4, 1);
  tie.scores << 0.0, 2.0, 2.0, 1.0;
  CHECK(predict_tags(tie, CellMask(1, 1)).empty());
  tie.scores << 0.0, 2.0, 1.0, 1.0;
  CHECK(predict_tags(tie, CellMask(1, 1)).get(0, 0, 0) == Tag::kHbTb);
}
