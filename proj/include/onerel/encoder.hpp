#pragma once

// Token encoder: a trainable lookup table plus an optional learned
// positional table. Produces the L x d embedding matrix the scorer consumes.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "onerel/corpus.hpp"

namespace onerel {

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocab();
  // Tokens in index order, starting at index 2.
  explicit Vocab(const std::vector<std::string>& tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int lookup(std::string_view token) const;
  const std::string& token(int index) const { return tokens_.at(index); }
  // All tokens including the two specials, in index order.
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<int> indices(const std::vector<std::string>& tokens) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  int add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Tokens with count >= min_count, by descending frequency, ties broken by
// first occurrence.
Vocab build_vocab(const std::vector<AnnotatedSentence>& corpus, int min_count);

struct EmbeddingTable {
  Eigen::MatrixXd tokens;      // V x d
  Eigen::MatrixXd positions;   // P x d, or empty

  int dim() const { return static_cast<int>(tokens.cols()); }
  int vocab_size() const { return static_cast<int>(tokens.rows()); }
  bool has_positions() const { return positions.rows() > 0; }
  int max_positions() const { return static_cast<int>(positions.rows()); }

  // Uniform in [-0.1, 0.1] from the given seed. max_positions = 0 disables
  // the positional table.
  static EmbeddingTable random(int vocab_size, int dim, int max_positions, std::uint64_t seed);
  static EmbeddingTable zeros(int vocab_size, int dim, int max_positions);
};

// Row i is the token row of indices[i], plus positional row i when requested
// (and the table has one). Throws UsageError for out-of-range indices or a
// sentence longer than the positional table.
Eigen::MatrixXd encode_indices(std::span<const int> indices, const EmbeddingTable& table,
                               bool use_positional);

Eigen::MatrixXd encode_tokens(const Sentence& s, const EmbeddingTable& table, const Vocab& vocab,
                              bool use_positional);

// Text embeddings: "token v1 v2 ... vd" per line. Rows for tokens present in
// the vocabulary are overwritten; returns how many were. A line whose value
// count differs from the table dimension is a DataError.
int import_pretrained(const std::filesystem::path& path, const Vocab& vocab, EmbeddingTable& table);

}  // namespace onerel
