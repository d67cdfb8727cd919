#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include "onerel/errors.hpp"
#include "onerel/evalx.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace onerel;
using namespace onerel::testing;

namespace {

Triple T(int hb, int he, int r, int tb, int te) { return Triple{Span{hb, he}, r, Span{tb, te}}; }

AnnotatedSentence with_triples(TripleSet triples) {
  AnnotatedSentence s;
  s.sentence.tokens = split("a b c d e f g h i j k l");
  s.triples = std::move(triples);
  return s;
}

}  // namespace

TEST_CASE("partial match keys on end tokens") {
  const TripleSet gold{T(1, 2, 0, 5, 6)};
  const TripleSet pred{T(0, 2, 0, 5, 6)};
  CHECK(match_partial(pred, gold) == 1);
  CHECK(match_exact(pred, gold) == 0);
  CHECK(match_partial(gold, gold) == 1);
  CHECK(match_exact(gold, gold) == 1);
  CHECK(match_partial({T(0, 2, 1, 5, 6)}, gold) == 0);
}

TEST_CASE("partial match consumes each gold triple once") {
  const TripleSet gold{T(2, 2, 0, 6, 6)};
  const TripleSet pred{T(0, 2, 0, 6, 6), T(1, 2, 0, 6, 6), T(2, 2, 0, 5, 6)};
  CHECK(match_partial(pred, gold) == 1);
}

TEST_CASE("micro_prf edge cases") {
  auto r = micro_prf(1, 1, 2);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
  r = micro_prf(0, 0, 3);
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.f1 == 0.0);
  r = micro_prf(0, 3, 0);
  CHECK(r.f1 == 0.0);
}

TEST_CASE("matching and PRF agree with brute-force oracles") {
  std::mt19937_64 rng(31);
  for (int n = 0; n < 3000; ++n) {
    const auto [pred, gold] = random_eval_pair(rng);
    const long partial = match_partial(pred, gold);
    const long exact = match_exact(pred, gold);
    REQUIRE(partial == oracle_partial(pred, gold));
    REQUIRE(exact == oracle_exact(pred, gold));
    REQUIRE(exact <= partial);
    const auto got = micro_prf(partial, static_cast<long>(pred.size()), static_cast<long>(gold.size()));
    const auto want = oracle_prf(partial, static_cast<long>(pred.size()), static_cast<long>(gold.size()));
    REQUIRE(got.precision == want.p);
    REQUIRE(got.recall == want.r);
    REQUIRE(got.f1 == want.f);
    CHECK(got.f1 >= 0.0);
    CHECK(got.f1 <= 1.0);
  }
}

TEST_CASE("corpus scores pool counts rather than average sentences") {
  // Sentence 1: 1/1 correct; sentence 2: 0/3 correct of 1 gold.
  std::vector<AnnotatedSentence> corpus{with_triples({T(0, 0, 0, 1, 1)}),
                                        with_triples({T(2, 2, 0, 3, 3)})};
  std::vector<TripleSet> pred{{T(0, 0, 0, 1, 1)},
                              {T(4, 4, 0, 5, 5), T(6, 6, 0, 7, 7), T(8, 8, 0, 9, 9)}};
  const auto report = breakdown(corpus, pred, EvalMode::kExact);
  CHECK(report.overall.correct == 1);
  CHECK(report.overall.predicted == 4);
  CHECK(report.overall.gold == 2);
  const auto pooled = micro_prf(report.overall);
  CHECK(pooled.precision == 0.25);
  CHECK(pooled.recall == 0.5);
  const double averaged_precision = (1.0 + 0.0) / 2;
  CHECK(pooled.precision != averaged_precision);
}

TEST_CASE("breakdown pools by flag and by gold count") {
  SUBCASE("single perfect Normal sentence") {
    const std::vector<AnnotatedSentence> corpus{located_in_sentence()};
    const std::vector<TripleSet> pred{located_in_sentence().triples};
    const auto r = breakdown(corpus, pred, EvalMode::kExact);
    REQUIRE(r.per_pattern.size() == 1);
    CHECK(micro_prf(r.per_pattern.at(Pattern::kNormal)).f1 == 1.0);
    REQUIRE(r.per_bucket.size() == 1);
    CHECK(r.per_bucket.count(0) == 1);
  }
  SUBCASE("two-flag sentence feeds both pools") {
    // EPO pair plus a triple sharing "New York City" only: EPO and SEO.
    auto s = epo_sentence();
    s.triples.insert(T(0, 2, 2, 10, 10));
    s.sentence.tokens.push_back("x");
    const auto label = classify_pattern(s);
    REQUIRE(label.has(Pattern::kEPO));
    REQUIRE(label.has(Pattern::kSEO));
    const std::vector<AnnotatedSentence> corpus{s};
    const std::vector<TripleSet> pred{{T(0, 2, 0, 6, 8)}};
    const auto r = breakdown(corpus, pred, EvalMode::kExact);
    CHECK(r.per_pattern.at(Pattern::kEPO).correct == 1);
    CHECK(r.per_pattern.at(Pattern::kSEO).correct == 1);
    CHECK(r.per_pattern.at(Pattern::kSEO).gold == 3);
    CHECK(r.per_pattern.count(Pattern::kNormal) == 0);
  }
  SUBCASE("bucket follows the gold count") {
    const std::vector<AnnotatedSentence> corpus{with_triples({T(0, 0, 0, 1, 1), T(2, 2, 0, 3, 3)})};
    const std::vector<TripleSet> pred{{}};
    const auto r = breakdown(corpus, pred, EvalMode::kExact);
    CHECK(r.per_bucket.count(1) == 1);
    CHECK(r.per_bucket.at(1).gold == 2);
  }
  SUBCASE("sentences without triples only count overall") {
    const std::vector<AnnotatedSentence> corpus{with_triples({})};
    const std::vector<TripleSet> pred{{T(0, 0, 0, 1, 1)}};
    const auto r = breakdown(corpus, pred, EvalMode::kExact);
    CHECK(r.overall.predicted == 1);
    CHECK(r.per_pattern.empty());
    CHECK(r.per_bucket.empty());
  }
  CHECK_THROWS_AS(breakdown({located_in_sentence()}, {}, EvalMode::kExact), UsageError);
}

TEST_CASE("perfect prediction scores 1 everywhere") {
  std::mt19937_64 rng(8);
  std::vector<AnnotatedSentence> corpus;
  std::vector<TripleSet> pred;
  for (int n = 0; n < 200; ++n) {
    auto s = random_sentence(rng, 15, 3, 7, 3);
    if (s.triples.empty()) continue;
    pred.push_back(s.triples);
    corpus.push_back(std::move(s));
  }
  for (auto mode : {EvalMode::kExact, EvalMode::kPartial}) {
    const auto r = breakdown(corpus, pred, mode);
    CHECK(micro_prf(r.overall).f1 == 1.0);
    for (const auto& [p, c] : r.per_pattern) CHECK(micro_prf(c).f1 == 1.0);
    for (const auto& [b, c] : r.per_bucket) CHECK(micro_prf(c).f1 == 1.0);
    CHECK(micro_prf(r.subtasks.entity_pair).f1 == 1.0);
    CHECK(micro_prf(r.subtasks.relation).f1 == 1.0);
    CHECK(r.per_bucket.size() == 5);
  }
}

TEST_CASE("sub-task projections") {
  SUBCASE("wrong relation keeps the entity pair") {
    const std::vector<AnnotatedSentence> corpus{with_triples({T(0, 1, 0, 4, 5)})};
    const std::vector<TripleSet> pred{{T(0, 1, 1, 4, 5)}};
    const auto s = subtask_metrics(corpus, pred, EvalMode::kExact);
    CHECK(s.entity_pair.correct == 1);
    CHECK(s.relation.correct == 0);
  }
  SUBCASE("projections match a brute-force set comparison") {
    std::mt19937_64 rng(12);
    for (int n = 0; n < 1000; ++n) {
      const auto [pred, gold] = random_eval_pair(rng);
      const std::vector<AnnotatedSentence> corpus{with_triples(gold)};
      for (auto mode : {EvalMode::kExact, EvalMode::kPartial}) {
        const auto s = subtask_metrics(corpus, {pred}, mode);
        auto pair_key = [mode](const Triple& t) {
          return mode == EvalMode::kExact
                     ? std::vector<int>{t.head.begin, t.head.end, t.tail.begin, t.tail.end}
                     : std::vector<int>{t.head.end, t.tail.end};
        };
        std::set<std::vector<int>> pp, gp;
        std::set<int> pr, gr;
        for (const auto& t : pred) {
          pp.insert(pair_key(t));
          pr.insert(t.relation);
        }
        for (const auto& t : gold) {
          gp.insert(pair_key(t));
          gr.insert(t.relation);
        }
        long pair_hits = 0, rel_hits = 0;
        for (const auto& k : pp) pair_hits += gp.count(k);
        for (int k : pr) rel_hits += gr.count(k);
        REQUIRE(s.entity_pair.correct == pair_hits);
        REQUIRE(s.entity_pair.predicted == static_cast<long>(pp.size()));
        REQUIRE(s.entity_pair.gold == static_cast<long>(gp.size()));
        REQUIRE(s.relation.correct == rel_hits);
        // Every correct triple projects onto a correct pair and relation.
        for (const auto& t : pred)
          if (gold.count(t)) {
            REQUIRE(gp.count(pair_key(t)));
            REQUIRE(gr.count(t.relation));
          }
      }
    }
  }
  SUBCASE("deduplication can push a sub-task below the triple score") {
    // Two EPO triples collapse into one pair, so one spurious pair weighs more.
    const std::vector<AnnotatedSentence> corpus{with_triples({T(0, 0, 0, 1, 1), T(0, 0, 1, 1, 1)})};
    const std::vector<TripleSet> pred{{T(0, 0, 0, 1, 1), T(0, 0, 1, 1, 1), T(3, 3, 2, 4, 4)}};
    const auto r = breakdown(corpus, pred, EvalMode::kExact);
    CHECK(micro_prf(r.overall).f1 == doctest::Approx(0.8));
    CHECK(micro_prf(r.subtasks.entity_pair).f1 == doctest::Approx(2.0 / 3.0));
  }
}

TEST_CASE("reports render every pool") {
  const std::vector<AnnotatedSentence> corpus{epo_sentence()};
  const std::vector<TripleSet> pred{epo_sentence().triples};
  const auto r = breakdown(corpus, pred, EvalMode::kPartial);
  const auto kv = format_key_values(r);
  CHECK(kv.find("partial.overall.f1=1.000000") != std::string::npos);
  CHECK(kv.find("partial.pattern.EPO.f1=1.000000") != std::string::npos);
  CHECK(kv.find("partial.bucket.2.gold=2") != std::string::npos);
  CHECK(kv.find("partial.subtask.relation.f1=1.000000") != std::string::npos);
  const auto table = format_report(r);
  CHECK(table.find("EPO") != std::string::npos);
  CHECK(table.find("Partial") != std::string::npos);
}

TEST_CASE("relation embedding export roundtrips bit for bit") {
  std::mt19937_64 rng(4);
  auto p = ScorerParams::init(3, 7, 2, 0.0, 5);
  p.R(0, 0) = 1.0 / 3.0;
  p.R(1, 5) = -1e-300;
  const RelationVocab rel({"located_in", "contains"});
  const auto path = std::filesystem::temp_directory_path() / "onerel_rel_export.tsv";
  export_relation_embeddings(p, rel, path);
  const auto rows = read_relation_embeddings(path);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].label == "located_in/NONE");
  CHECK(rows[6].label == "contains/HB-TE");
  for (int c = 0; c < 8; ++c) {
    REQUIRE(rows[c].values.size() == 7);
    for (int i = 0; i < 7; ++i) CHECK(rows[c].values[i] == p.R(i, c));
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(export_relation_embeddings(p, RelationVocab({"one"}), path), UsageError);
  CHECK_THROWS_AS(export_relation_embeddings(p, rel, "/nonexistent-dir/x.tsv"), DataError);
}
