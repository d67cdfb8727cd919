#pragma once

// Everything needed to run prediction, and its checkpoint file.
//
// Checkpoints are single JSON documents:
//
//   {"format": "onerel-checkpoint", "version": 1, "config_hash": "...",
//    "dims": {...}, "relations": [...], "vocab": [...],
//    "W": {"rows": r, "cols": c, "data": [row-major values]}, "b": ..., ...}
//
// Doubles are written in shortest round-trip form, so a reload reproduces
// every parameter bit for bit.

#include <filesystem>
#include <string>

#include "onerel/corpus.hpp"
#include "onerel/encoder.hpp"
#include "onerel/scorer.hpp"

namespace onerel {

inline constexpr int kCheckpointVersion = 1;

struct Model {
  RelationVocab relations;
  Vocab vocab;
  EmbeddingTable embeddings;
  ScorerParams scorer;
  bool use_positional = true;
  int max_seq_len = kDefaultMaxSeqLen;
  std::string config_hash;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model);
// Throws DataError for unreadable files, unknown versions, or shape mismatches.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace onerel
