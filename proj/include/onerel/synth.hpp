#pragma once

// Synthetic corpora with a controlled overlap-pattern mix. Every sentence is
// built for exactly one pattern, checked with classify_pattern, and encodes
// without collisions, so the recorded label is the sentence's only flag.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "onerel/corpus.hpp"

namespace onerel {

struct SynthConfig {
  int count = 100;
  int num_relations = 4;
  // Fractions for Normal, EPO, SEO, HTO; must sum to 1.
  std::array<double, kNumPatterns> mix{0.25, 0.25, 0.25, 0.25};
  std::uint64_t seed = 7;
  int min_length = 8;
  int max_length = 20;
  int token_pool = 5000;
  // Additional unrelated triples (fresh, disjoint entities) per sentence.
  int max_extra_triples = 1;

  // Throws UsageError for infeasible settings.
  void check() const;
};

struct SynthCorpus {
  Corpus corpus;
  std::vector<Pattern> labels;  // generation target per sentence
};

SynthCorpus generate_synthetic(const SynthConfig& config);

// Native format plus a "pattern" field holding the generation label.
void save_synthetic(const std::filesystem::path& path, const SynthCorpus& synth);

// The "pattern" field of every record, empty where absent.
std::vector<std::optional<Pattern>> read_pattern_labels(const std::filesystem::path& path);

}  // namespace onerel
