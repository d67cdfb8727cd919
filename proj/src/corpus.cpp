#include "onerel/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "onerel/errors.hpp"

namespace onerel {

using nlohmann::json;

RelationVocab::RelationVocab(std::vector<std::string> names) {
  for (auto& n : names) {
    if (n.empty()) throw DataError("relation names must be non-empty");
    if (index_.count(n)) throw DataError(fmt::format("duplicate relation name '{}'", n));
    index_.emplace(n, static_cast<int>(names_.size()));
    names_.push_back(std::move(n));
  }
}

namespace {

// Names ordered by id from {"name": id}.
std::vector<std::string> names_by_id(const json& map, const std::string& where) {
  std::vector<std::pair<long, std::string>> pairs;
  for (const auto& [name, id] : map.items()) {
    if (!id.is_number_integer()) throw DataError(fmt::format("{}: relation ids must be integers", where));
    pairs.emplace_back(id.get<long>(), name);
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<std::string> names;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    if (pairs[n].first != static_cast<long>(n))
      throw DataError(fmt::format("{}: relation ids must be 0..{}", where, pairs.size() - 1));
    names.push_back(pairs[n].second);
  }
  return names;
}

std::vector<std::string> names_from_json(const std::string& text, const std::string& where) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: malformed relation file: {}", where, e.what()));
  }
  if (doc.is_object()) return names_by_id(doc, where);
  // ["a", "b", ...] or [{"0": "a", ...}, {"a": 0, ...}].
  if (doc.is_array() && doc.size() == 2 && doc[0].is_object() && doc[1].is_object())
    return names_by_id(doc[1], where);
  if (doc.is_array() && std::all_of(doc.begin(), doc.end(), [](const json& j) { return j.is_string(); }))
    return doc.get<std::vector<std::string>>();
  throw DataError(fmt::format("{}: unrecognised relation file layout", where));
}

}  // namespace

RelationVocab RelationVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open relation file '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  std::vector<std::string> names;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '[' || text[first] == '{')) {
    names = names_from_json(text, path.string());
  } else {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      auto toks = whitespace_tokenize(line);
      if (toks.empty()) continue;
      if (toks.size() != 1)
        throw DataError(fmt::format("{}: relation names may not contain whitespace: '{}'",
                                    path.string(), line));
      names.push_back(toks.front());
    }
  }
  if (names.empty()) throw DataError(fmt::format("{}: no relations", path.string()));
  return RelationVocab(std::move(names));
}

std::optional<int> RelationVocab::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int RelationVocab::index(std::string_view name) const {
  auto found = find(name);
  if (!found) throw DataError(fmt::format("unknown relation '{}'", name));
  return *found;
}

int RelationVocab::intern(std::string_view name) {
  if (auto found = find(name)) return *found;
  if (name.empty()) throw DataError("relation names must be non-empty");
  int id = size();
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

namespace {

bool span_in_range(const Span& s, int length) {
  return 0 <= s.begin && s.begin <= s.end && s.end < length;
}

std::string describe(const Triple& t) {
  return fmt::format("([{},{}], r{}, [{},{}])", t.head.begin, t.head.end, t.relation,
                     t.tail.begin, t.tail.end);
}

}  // namespace

void validate(const AnnotatedSentence& s, int num_relations) {
  const int length = s.sentence.length();
  if (length < 1) throw DataError(fmt::format("sentence '{}' has no tokens", s.sentence.id));
  for (const auto& tok : s.sentence.tokens)
    if (tok.empty()) throw DataError(fmt::format("sentence '{}' has an empty token", s.sentence.id));
  for (const auto& t : s.triples) {
    if (!span_in_range(t.head, length) || !span_in_range(t.tail, length))
      throw DataError(fmt::format("sentence '{}': triple {} out of range for {} tokens",
                                  s.sentence.id, describe(t), length));
    if (t.relation < 0 || t.relation >= num_relations)
      throw DataError(fmt::format("sentence '{}': relation index {} outside [0, {})",
                                  s.sentence.id, t.relation, num_relations));
  }
}

void truncate(AnnotatedSentence& s, int max_seq_len, std::vector<std::string>& warnings) {
  if (max_seq_len < 1) throw UsageError("max_seq_len must be positive");
  if (s.sentence.length() <= max_seq_len) return;
  s.sentence.tokens.resize(max_seq_len);
  for (auto it = s.triples.begin(); it != s.triples.end();) {
    if (it->head.end >= max_seq_len || it->tail.end >= max_seq_len) {
      warnings.push_back(fmt::format("sentence '{}': triple {} dropped by truncation to {} tokens",
                                     s.sentence.id, describe(*it), max_seq_len));
      it = s.triples.erase(it);
    } else {
      ++it;
    }
  }
}

// ---------------------------------------------------------------------------
// Native format

namespace {

Span parse_span(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw DataError("span must be a [begin, end] pair of integers");
  return Span{j[0].get<int>(), j[1].get<int>()};
}

AnnotatedSentence parse_native_record(const json& rec, RelationVocab& relations, bool fixed_vocab,
                                      long line_no) {
  if (!rec.is_object()) throw DataError("record is not a JSON object");
  AnnotatedSentence s;
  if (auto it = rec.find("id"); it != rec.end()) {
    if (!it->is_string()) throw DataError("'id' must be a string");
    s.sentence.id = it->get<std::string>();
  } else {
    s.sentence.id = std::to_string(line_no);
  }
  auto tokens = rec.find("tokens");
  if (tokens == rec.end() || !tokens->is_array()) throw DataError("missing 'tokens' array");
  for (const auto& tok : *tokens) {
    if (!tok.is_string()) throw DataError("tokens must be strings");
    s.sentence.tokens.push_back(tok.get<std::string>());
  }
  if (auto triples = rec.find("triples"); triples != rec.end()) {
    if (!triples->is_array()) throw DataError("'triples' must be an array");
    for (const auto& t : *triples) {
      if (!t.is_object() || !t.contains("head") || !t.contains("tail") || !t.contains("relation") ||
          !t["relation"].is_string())
        throw DataError("triple must have 'head', 'relation' (string) and 'tail'");
      auto name = t["relation"].get<std::string>();
      int rel = fixed_vocab ? relations.index(name) : relations.intern(name);
      Triple triple{parse_span(t["head"]), rel, parse_span(t["tail"])};
      if (!s.triples.insert(triple).second)
        throw DataError(fmt::format("sentence '{}': duplicate triple {}", s.sentence.id,
                                    describe(triple)));
    }
  }
  return s;
}

}  // namespace

Corpus parse_native(std::istream& in, const LoadOptions& options, std::string_view source) {
  Corpus corpus;
  const bool fixed_vocab = options.relations.has_value();
  if (fixed_vocab) corpus.relations = *options.relations;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnnotatedSentence s;
    try {
      s = parse_native_record(json::parse(line), corpus.relations, fixed_vocab, line_no);
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: malformed record: {}", source, line_no, e.what()));
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", source, line_no, e.what()));
    }
    validate(s, corpus.relations.size());
    truncate(s, options.max_seq_len, corpus.warnings);
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

Corpus load_native(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  return parse_native(in, options, path.string());
}

std::string native_record(const AnnotatedSentence& s, const RelationVocab& relations) {
  json triples = json::array();
  for (const auto& t : s.triples) {
    triples.push_back({{"head", {t.head.begin, t.head.end}},
                       {"relation", relations.name(t.relation)},
                       {"tail", {t.tail.begin, t.tail.end}}});
  }
  json rec = {{"id", s.sentence.id}, {"tokens", s.sentence.tokens}, {"triples", triples}};
  return rec.dump();
}

void write_native(std::ostream& out, const Corpus& corpus) {
  for (const auto& s : corpus.sentences) out << native_record(s, corpus.relations) << '\n';
}

void save_native(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  write_native(out, corpus);
  if (!out) throw DataError(fmt::format("write failed for '{}'", path.string()));
}

// ---------------------------------------------------------------------------
// Public format

std::vector<std::string> whitespace_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

namespace {

std::optional<Span> resolve_entity(const std::vector<std::string>& tokens, std::string_view entity,
                                   MatchMode mode) {
  auto needle = whitespace_tokenize(entity);
  if (needle.empty()) return std::nullopt;
  const int n = static_cast<int>(tokens.size());
  if (mode == MatchMode::kLastToken) {
    for (int i = 0; i < n; ++i)
      if (tokens[i] == needle.back()) return Span{i, i};
    return std::nullopt;
  }
  const int m = static_cast<int>(needle.size());
  for (int i = 0; i + m <= n; ++i) {
    if (std::equal(needle.begin(), needle.end(), tokens.begin() + i)) return Span{i, i + m - 1};
  }
  return std::nullopt;
}

}  // namespace

Corpus parse_public(std::istream& in, const RelationVocab& relations, MatchMode mode,
                    int max_seq_len, std::string_view source) {
  Corpus corpus;
  corpus.relations = relations;

  auto add_record = [&](const json& rec, const std::string& where, long ordinal) {
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string())
      throw DataError(fmt::format("{}: missing 'text' string", where));
    AnnotatedSentence s;
    s.sentence.id = rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>()
                                                                : std::to_string(ordinal);
    s.sentence.tokens = whitespace_tokenize(rec["text"].get<std::string>());
    if (s.sentence.tokens.empty()) throw DataError(fmt::format("{}: empty text", where));

    auto list = rec.find("triple_list");
    if (list != rec.end()) {
      if (!list->is_array()) throw DataError(fmt::format("{}: 'triple_list' must be an array", where));
      for (const auto& t : *list) {
        if (!t.is_array() || t.size() != 3 || !t[0].is_string() || !t[1].is_string() ||
            !t[2].is_string())
          throw DataError(fmt::format("{}: triple must be [head, relation, tail] strings", where));
        const auto head_text = t[0].get<std::string>();
        const auto rel_name = t[1].get<std::string>();
        const auto tail_text = t[2].get<std::string>();
        auto rel = relations.find(rel_name);
        if (!rel) throw DataError(fmt::format("{}: unknown relation '{}'", where, rel_name));
        auto head = resolve_entity(s.sentence.tokens, head_text, mode);
        auto tail = resolve_entity(s.sentence.tokens, tail_text, mode);
        if (!head || !tail) {
          corpus.warnings.push_back(fmt::format("{}: skipped ('{}', {}, '{}'): {} not found in text",
                                                where, head_text, rel_name, tail_text,
                                                !head ? "head" : "tail"));
          continue;
        }
        if (!s.triples.insert(Triple{*head, *rel, *tail}).second) {
          corpus.warnings.push_back(fmt::format("{}: duplicate ('{}', {}, '{}') merged", where,
                                                head_text, rel_name, tail_text));
        }
      }
    }
    truncate(s, max_seq_len, corpus.warnings);
    corpus.sentences.push_back(std::move(s));
  };

  // Either one JSON array of records or one record per line.
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}: malformed JSON array: {}", source, e.what()));
    }
    for (std::size_t n = 0; n < doc.size(); ++n)
      add_record(doc[n], fmt::format("{}#{}", source, n + 1), static_cast<long>(n + 1));
    return corpus;
  }

  std::istringstream lines(text);
  std::string line;
  long line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = fmt::format("{}:{}", source, line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}: malformed record: {}", where, e.what()));
    }
    add_record(rec, where, line_no);
  }
  return corpus;
}

Corpus load_public(const std::filesystem::path& path, const RelationVocab& relations,
                   MatchMode mode, int max_seq_len) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  return parse_public(in, relations, mode, max_seq_len, path.string());
}

// ---------------------------------------------------------------------------
// Patterns

std::string_view pattern_name(Pattern p) {
  switch (p) {
    case Pattern::kNormal: return "Normal";
    case Pattern::kEPO: return "EPO";
    case Pattern::kSEO: return "SEO";
    case Pattern::kHTO: return "HTO";
  }
  return "?";
}

std::optional<Pattern> parse_pattern(std::string_view name) {
  for (int p = 0; p < kNumPatterns; ++p)
    if (pattern_name(static_cast<Pattern>(p)) == name) return static_cast<Pattern>(p);
  return std::nullopt;
}

std::string_view bucket_name(int bucket) {
  static constexpr std::array<std::string_view, kNumBuckets> kNames{"N=1", "N=2", "N=3", "N=4",
                                                                     "N>=5"};
  return kNames.at(bucket);
}

PatternLabel classify_pattern(const AnnotatedSentence& s) {
  PatternLabel label;
  if (s.triples.empty()) return label;
  label.bucket = static_cast<int>(std::min<std::size_t>(s.triples.size(), kNumBuckets)) - 1;

  auto& flags = label.flags;
  const std::vector<Triple> triples(s.triples.begin(), s.triples.end());
  for (std::size_t a = 0; a < triples.size(); ++a) {
    const auto& x = triples[a];
    if (x.head.overlaps(x.tail)) flags[static_cast<int>(Pattern::kHTO)] = true;
    const std::set<Span> ex{x.head, x.tail};
    for (std::size_t b = a + 1; b < triples.size(); ++b) {
      const std::set<Span> ey{triples[b].head, triples[b].tail};
      if (ex == ey) {
        flags[static_cast<int>(Pattern::kEPO)] = true;
      } else if (ex.count(*ey.begin()) || ex.count(*ey.rbegin())) {
        flags[static_cast<int>(Pattern::kSEO)] = true;
      }
    }
  }
  flags[static_cast<int>(Pattern::kNormal)] =
      !flags[static_cast<int>(Pattern::kEPO)] && !flags[static_cast<int>(Pattern::kSEO)] &&
      !flags[static_cast<int>(Pattern::kHTO)];
  return label;
}

CorpusStats corpus_stats(const std::vector<AnnotatedSentence>& corpus) {
  if (corpus.empty()) throw DataError("corpus is empty");
  CorpusStats stats;
  for (const auto& s : corpus) {
    ++stats.sentences;
    stats.triples += static_cast<long>(s.triples.size());
    const auto label = classify_pattern(s);
    if (label.no_triples()) {
      ++stats.no_triple_sentences;
      continue;
    }
    for (int p = 0; p < kNumPatterns; ++p) stats.patterns[p] += label.flags[p] ? 1 : 0;
    ++stats.buckets[*label.bucket];
  }
  return stats;
}

}  // namespace onerel
