#pragma once

// Corpus data model, ingestion of the native and public JSON-lines formats,
// and overlap-pattern statistics.

#include <array>
#include <compare>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace onerel {

inline constexpr int kDefaultMaxSeqLen = 100;

// Token range, 0-based and inclusive on both ends.
struct Span {
  int begin = 0;
  int end = 0;

  int length() const { return end - begin + 1; }
  bool overlaps(const Span& other) const {
    return begin <= other.end && other.begin <= end;
  }
  auto operator<=>(const Span&) const = default;
};

struct Triple {
  Span head;
  int relation = 0;
  Span tail;

  auto operator<=>(const Triple&) const = default;
};

using TripleSet = std::set<Triple>;

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;

  int length() const { return static_cast<int>(tokens.size()); }
};

class RelationVocab {
 public:
  RelationVocab() = default;
  explicit RelationVocab(std::vector<std::string> names);

  // Reads one relation name per non-empty line.
  static RelationVocab load(const std::filesystem::path& path);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const { return names_.at(index); }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<int> find(std::string_view name) const;
  // Throws DataError for unknown names.
  int index(std::string_view name) const;
  // Returns the existing index or appends.
  int intern(std::string_view name);

  bool operator==(const RelationVocab& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct AnnotatedSentence {
  Sentence sentence;
  TripleSet triples;

  bool operator==(const AnnotatedSentence& other) const {
    return sentence.id == other.sentence.id && sentence.tokens == other.sentence.tokens &&
           triples == other.triples;
  }
};

// Throws DataError when a span falls outside the sentence, a token is empty,
// or the sentence is empty.
void validate(const AnnotatedSentence& s, int num_relations);

struct Corpus {
  RelationVocab relations;
  std::vector<AnnotatedSentence> sentences;
  std::vector<std::string> warnings;
};

struct LoadOptions {
  int max_seq_len = kDefaultMaxSeqLen;
  // When set, relation names must come from this vocabulary; otherwise the
  // vocabulary is built in first-appearance order.
  std::optional<RelationVocab> relations;
};

Corpus load_native(const std::filesystem::path& path, const LoadOptions& options = {});
Corpus parse_native(std::istream& in, const LoadOptions& options = {},
                    std::string_view source = "<stream>");
void save_native(const std::filesystem::path& path, const Corpus& corpus);
void write_native(std::ostream& out, const Corpus& corpus);
// One native-format record without trailing newline.
std::string native_record(const AnnotatedSentence& s, const RelationVocab& relations);

enum class MatchMode { kWholeSpan, kLastToken };

Corpus load_public(const std::filesystem::path& path, const RelationVocab& relations,
                   MatchMode mode, int max_seq_len = kDefaultMaxSeqLen);
Corpus parse_public(std::istream& in, const RelationVocab& relations, MatchMode mode,
                    int max_seq_len = kDefaultMaxSeqLen, std::string_view source = "<stream>");

std::vector<std::string> whitespace_tokenize(std::string_view text);

// Truncates to max_seq_len tokens and drops triples touching the cut-off
// region, appending one warning per dropped triple.
void truncate(AnnotatedSentence& s, int max_seq_len, std::vector<std::string>& warnings);

enum class Pattern { kNormal = 0, kEPO = 1, kSEO = 2, kHTO = 3 };
inline constexpr int kNumPatterns = 4;
inline constexpr int kNumBuckets = 5;  // N = 1, 2, 3, 4, >= 5

std::string_view pattern_name(Pattern p);
std::optional<Pattern> parse_pattern(std::string_view name);
std::string_view bucket_name(int bucket);

struct PatternLabel {
  std::array<bool, kNumPatterns> flags{};
  // 0..4 for N = 1..4 and N >= 5; empty when the sentence has no triples.
  std::optional<int> bucket;

  bool has(Pattern p) const { return flags[static_cast<int>(p)]; }
  bool no_triples() const { return !bucket.has_value(); }
};

PatternLabel classify_pattern(const AnnotatedSentence& s);

struct CorpusStats {
  long sentences = 0;
  long triples = 0;
  long no_triple_sentences = 0;
  std::array<long, kNumPatterns> patterns{};
  std::array<long, kNumBuckets> buckets{};
};

// Throws DataError on an empty corpus.
CorpusStats corpus_stats(const std::vector<AnnotatedSentence>& corpus);

}  // namespace onerel
