#include "onerel/encoder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "onerel/errors.hpp"

namespace onerel {

Vocab::Vocab() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

Vocab::Vocab(const std::vector<std::string>& tokens) : Vocab() {
  for (const auto& t : tokens) {
    if (t.empty() || index_.count(t)) throw DataError(fmt::format("bad vocabulary entry '{}'", t));
    add(t);
  }
}

int Vocab::add(std::string token) {
  const int id = size();
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

int Vocab::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end() || it->second < 2) return kUnk;
  return it->second;
}

std::vector<int> Vocab::indices(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(lookup(t));
  return out;
}

Vocab build_vocab(const std::vector<AnnotatedSentence>& corpus, int min_count) {
  if (min_count < 1) throw UsageError("min_count must be >= 1");
  struct Entry {
    long count = 0;
    long first = 0;
  };
  std::unordered_map<std::string, Entry> seen;
  long position = 0;
  for (const auto& s : corpus) {
    for (const auto& tok : s.sentence.tokens) {
      auto [it, inserted] = seen.try_emplace(tok, Entry{0, position});
      ++it->second.count;
      ++position;
    }
  }
  std::vector<std::pair<std::string, Entry>> ranked(seen.begin(), seen.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first < b.second.first;
  });
  std::vector<std::string> kept;
  for (const auto& [tok, entry] : ranked) {
    if (entry.count < min_count) break;
    if (tok == Vocab::kPadToken || tok == Vocab::kUnkToken) continue;
    kept.push_back(tok);
  }
  return Vocab(kept);
}

EmbeddingTable EmbeddingTable::zeros(int vocab_size, int dim, int max_positions) {
  if (vocab_size < 2 || dim < 1 || max_positions < 0)
    throw UsageError("embedding table needs vocab_size >= 2, dim >= 1");
  EmbeddingTable t;
  t.tokens = Eigen::MatrixXd::Zero(vocab_size, dim);
  t.positions = Eigen::MatrixXd::Zero(max_positions, dim);
  return t;
}

EmbeddingTable EmbeddingTable::random(int vocab_size, int dim, int max_positions,
                                      std::uint64_t seed) {
  auto t = zeros(vocab_size, dim, max_positions);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.1, 0.1);
  for (Eigen::Index i = 0; i < t.tokens.size(); ++i) t.tokens.data()[i] = uniform(rng);
  for (Eigen::Index i = 0; i < t.positions.size(); ++i) t.positions.data()[i] = uniform(rng);
  return t;
}

Eigen::MatrixXd encode_indices(std::span<const int> indices, const EmbeddingTable& table,
                               bool use_positional) {
  const int length = static_cast<int>(indices.size());
  const bool positional = use_positional && table.has_positions();
  if (positional && length > table.max_positions())
    throw UsageError(fmt::format("sentence of {} tokens exceeds {} positions", length,
                                 table.max_positions()));
  Eigen::MatrixXd out(length, table.dim());
  for (int i = 0; i < length; ++i) {
    const int v = indices[i];
    if (v < 0 || v >= table.vocab_size())
      throw UsageError(fmt::format("token index {} outside vocabulary of {}", v, table.vocab_size()));
    out.row(i) = table.tokens.row(v);
    if (positional) out.row(i) += table.positions.row(i);
  }
  return out;
}

Eigen::MatrixXd encode_tokens(const Sentence& s, const EmbeddingTable& table, const Vocab& vocab,
                              bool use_positional) {
  const auto idx = vocab.indices(s.tokens);
  return encode_indices(idx, table, use_positional);
}

int import_pretrained(const std::filesystem::path& path, const Vocab& vocab, EmbeddingTable& table) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open embeddings '{}'", path.string()));
  std::string line;
  long line_no = 0;
  int loaded = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = whitespace_tokenize(line);
    if (fields.empty()) continue;
    const int values = static_cast<int>(fields.size()) - 1;
    if (values != table.dim())
      throw DataError(fmt::format("{}:{}: expected {} values, found {}", path.string(), line_no,
                                  table.dim(), values));
    Eigen::RowVectorXd row(values);
    for (int k = 0; k < values; ++k) {
      const auto& f = fields[k + 1];
      double x = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), x);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(x))
        throw DataError(fmt::format("{}:{}: bad number '{}'", path.string(), line_no, f));
      row[k] = x;
    }
    const int v = vocab.lookup(fields.front());
    if (v == Vocab::kUnk && fields.front() != Vocab::kUnkToken) continue;
    table.tokens.row(v) = row;
    ++loaded;
  }
  return loaded;
}

}  // namespace onerel
