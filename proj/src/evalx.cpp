#include "onerel/evalx.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "onerel/errors.hpp"
#include "onerel/tagging.hpp"

namespace onerel {

std::string_view eval_mode_name(EvalMode mode) {
  return mode == EvalMode::kPartial ? "partial" : "exact";
}

long match_partial(const TripleSet& pred, const TripleSet& gold) {
  // Matching on (head end, relation, tail end) is an equivalence, so the
  // maximum one-to-one matching is the per-key minimum of the two counts.
  using Key = std::tuple<int, int, int>;
  std::map<Key, long> gold_keys;
  for (const auto& t : gold) ++gold_keys[{t.head.end, t.relation, t.tail.end}];
  long correct = 0;
  for (const auto& t : pred) {
    auto it = gold_keys.find({t.head.end, t.relation, t.tail.end});
    if (it != gold_keys.end() && it->second > 0) {
      --it->second;
      ++correct;
    }
  }
  return correct;
}

long match_exact(const TripleSet& pred, const TripleSet& gold) {
  long correct = 0;
  for (const auto& t : pred) correct += gold.count(t);
  return correct;
}

long match(const TripleSet& pred, const TripleSet& gold, EvalMode mode) {
  return mode == EvalMode::kPartial ? match_partial(pred, gold) : match_exact(pred, gold);
}

PRF micro_prf(long correct, long predicted, long gold) {
  PRF r;
  r.precision = predicted > 0 ? static_cast<double>(correct) / predicted : 0.0;
  r.recall = gold > 0 ? static_cast<double>(correct) / gold : 0.0;
  const double sum = r.precision + r.recall;
  r.f1 = sum > 0.0 ? 2.0 * r.precision * r.recall / sum : 0.0;
  return r;
}

namespace {

void check_sizes(const std::vector<AnnotatedSentence>& corpus,
                 const std::vector<TripleSet>& predictions) {
  if (corpus.size() != predictions.size())
    throw UsageError(fmt::format("{} predictions for {} sentences", predictions.size(),
                                 corpus.size()));
}

Span boundary(const Span& s, EvalMode mode) {
  return mode == EvalMode::kPartial ? Span{s.end, s.end} : s;
}

template <typename Project>
Counts projected_counts(const TripleSet& pred, const TripleSet& gold, Project project) {
  using Key = decltype(project(std::declval<const Triple&>()));
  std::set<Key> p, g;
  for (const auto& t : pred) p.insert(project(t));
  for (const auto& t : gold) g.insert(project(t));
  Counts c;
  c.predicted = static_cast<long>(p.size());
  c.gold = static_cast<long>(g.size());
  for (const auto& k : p) c.correct += g.count(k);
  return c;
}

}  // namespace

SubtaskCounts subtask_metrics(const std::vector<AnnotatedSentence>& corpus,
                              const std::vector<TripleSet>& predictions, EvalMode mode) {
  check_sizes(corpus, predictions);
  SubtaskCounts out;
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    const auto& gold = corpus[n].triples;
    const auto& pred = predictions[n];
    out.entity_pair += projected_counts(pred, gold, [mode](const Triple& t) {
      return std::pair{boundary(t.head, mode), boundary(t.tail, mode)};
    });
    out.relation += projected_counts(pred, gold, [](const Triple& t) { return t.relation; });
  }
  return out;
}

MetricsReport breakdown(const std::vector<AnnotatedSentence>& corpus,
                        const std::vector<TripleSet>& predictions, EvalMode mode) {
  check_sizes(corpus, predictions);
  MetricsReport report;
  report.mode = mode;
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    const auto& gold = corpus[n].triples;
    const auto& pred = predictions[n];
    const Counts c{match(pred, gold, mode), static_cast<long>(pred.size()),
                   static_cast<long>(gold.size())};
    report.overall += c;
    const auto label = classify_pattern(corpus[n]);
    if (label.no_triples()) continue;
    for (int p = 0; p < kNumPatterns; ++p)
      if (label.flags[p]) report.per_pattern[static_cast<Pattern>(p)] += c;
    report.per_bucket[*label.bucket] += c;
  }
  report.subtasks = subtask_metrics(corpus, predictions, mode);
  return report;
}

namespace {

struct Row {
  std::string key;
  std::string label;
  Counts counts;
};

std::vector<Row> report_rows(const MetricsReport& r) {
  std::vector<Row> rows;
  rows.push_back({"overall", "Overall", r.overall});
  for (const auto& [p, c] : r.per_pattern)
    rows.push_back({fmt::format("pattern.{}", pattern_name(p)), std::string(pattern_name(p)), c});
  for (const auto& [b, c] : r.per_bucket) {
    static constexpr std::array<std::string_view, kNumBuckets> kKeys{"1", "2", "3", "4", "5plus"};
    rows.push_back({fmt::format("bucket.{}", kKeys.at(b)), std::string(bucket_name(b)), c});
  }
  rows.push_back({"subtask.entity_pair", "(h, t)", r.subtasks.entity_pair});
  rows.push_back({"subtask.relation", "r", r.subtasks.relation});
  return rows;
}

}  // namespace

std::string format_report(const MetricsReport& report) {
  std::ostringstream out;
  out << fmt::format("{} match\n", report.mode == EvalMode::kPartial ? "Partial" : "Exact");
  out << fmt::format("{:<10} {:>7} {:>7} {:>7} {:>8} {:>8} {:>8}\n", "", "Prec.", "Rec.", "F1",
                     "correct", "pred", "gold");
  for (const auto& row : report_rows(report)) {
    const auto prf = micro_prf(row.counts);
    out << fmt::format("{:<10} {:>7.3f} {:>7.3f} {:>7.3f} {:>8} {:>8} {:>8}\n", row.label,
                       prf.precision, prf.recall, prf.f1, row.counts.correct,
                       row.counts.predicted, row.counts.gold);
  }
  return out.str();
}

std::string format_key_values(const MetricsReport& report) {
  std::ostringstream out;
  const auto mode = eval_mode_name(report.mode);
  for (const auto& row : report_rows(report)) {
    const auto prf = micro_prf(row.counts);
    out << fmt::format("{}.{}.precision={:.6f}\n", mode, row.key, prf.precision);
    out << fmt::format("{}.{}.recall={:.6f}\n", mode, row.key, prf.recall);
    out << fmt::format("{}.{}.f1={:.6f}\n", mode, row.key, prf.f1);
    out << fmt::format("{}.{}.correct={}\n", mode, row.key, row.counts.correct);
    out << fmt::format("{}.{}.predicted={}\n", mode, row.key, row.counts.predicted);
    out << fmt::format("{}.{}.gold={}\n", mode, row.key, row.counts.gold);
  }
  return out.str();
}

void export_relation_embeddings(const ScorerParams& params, const RelationVocab& relations,
                                const std::filesystem::path& path) {
  if (params.num_relations() != relations.size())
    throw UsageError(fmt::format("R has {} relations, vocabulary has {}", params.num_relations(),
                                 relations.size()));
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  static constexpr std::array<std::string_view, kNumTags> kTagNames{"NONE", "HB-TB", "HB-TE",
                                                                    "HE-TE"};
  for (int k = 0; k < relations.size(); ++k) {
    for (int t = 0; t < kNumTags; ++t) {
      out << relations.name(k) << '/' << kTagNames[t];
      const auto col = params.R.col(k * kNumTags + t);
      // {} prints the shortest representation that reads back exactly.
      for (Eigen::Index i = 0; i < col.size(); ++i) out << '\t' << fmt::format("{}", col[i]);
      out << '\n';
    }
  }
  if (!out) throw DataError(fmt::format("write failed for '{}'", path.string()));
}

std::vector<RelationEmbeddingRow> read_relation_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::vector<RelationEmbeddingRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    RelationEmbeddingRow row;
    std::getline(fields, row.label, '\t');
    std::string f;
    while (std::getline(fields, f, '\t')) {
      double x = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), x);
      if (ec != std::errc() || ptr != f.data() + f.size())
        throw DataError(fmt::format("{}: bad value '{}'", path.string(), f));
      row.values.push_back(x);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace onerel
