#pragma once

// Micro-averaged triple evaluation: Partial Match (relation plus last token
// of head and tail) and Exact Match (full spans plus relation), broken down
// by overlap pattern, by gold triple count, and by sub-task.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "onerel/corpus.hpp"
#include "onerel/scorer.hpp"

namespace onerel {

enum class EvalMode { kPartial, kExact };

std::string_view eval_mode_name(EvalMode mode);

// Each gold triple is consumed at most once.
long match_partial(const TripleSet& pred, const TripleSet& gold);
long match_exact(const TripleSet& pred, const TripleSet& gold);
long match(const TripleSet& pred, const TripleSet& gold, EvalMode mode);

struct Counts {
  long correct = 0;
  long predicted = 0;
  long gold = 0;

  Counts& operator+=(const Counts& o) {
    correct += o.correct;
    predicted += o.predicted;
    gold += o.gold;
    return *this;
  }
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

PRF micro_prf(long correct, long predicted, long gold);
inline PRF micro_prf(const Counts& c) { return micro_prf(c.correct, c.predicted, c.gold); }

struct SubtaskCounts {
  Counts entity_pair;
  Counts relation;
};

struct MetricsReport {
  EvalMode mode = EvalMode::kExact;
  Counts overall;
  // Only patterns / buckets carried by at least one gold sentence appear.
  std::map<Pattern, Counts> per_pattern;
  std::map<int, Counts> per_bucket;
  SubtaskCounts subtasks;
};

// Throws UsageError unless there is one prediction per sentence.
MetricsReport breakdown(const std::vector<AnnotatedSentence>& corpus,
                        const std::vector<TripleSet>& predictions, EvalMode mode);

// Entity-pair and relation projections, de-duplicated per sentence.
SubtaskCounts subtask_metrics(const std::vector<AnnotatedSentence>& corpus,
                              const std::vector<TripleSet>& predictions, EvalMode mode);

// Aligned table for people.
std::string format_report(const MetricsReport& report);
// "key=value" lines with stable keys, e.g. "exact.overall.f1=1.000000".
std::string format_key_values(const MetricsReport& report);

// One tab-separated row per column of R: "relation/TAG" then d_e values.
void export_relation_embeddings(const ScorerParams& params, const RelationVocab& relations,
                                const std::filesystem::path& path);

struct RelationEmbeddingRow {
  std::string label;
  std::vector<double> values;
};
std::vector<RelationEmbeddingRow> read_relation_embeddings(const std::filesystem::path& path);

}  // namespace onerel
