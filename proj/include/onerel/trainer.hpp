#pragma once

// Mini-batch training with Adam, and end-to-end prediction
// (encode tokens -> score -> argmax tags -> decode).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "onerel/corpus.hpp"
#include "onerel/model.hpp"

namespace onerel {

struct TrainConfig {
  int batch_size = 8;            // 8 for NYT-style corpora, 6 for WebNLG-style
  double learning_rate = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int epochs = 10;
  std::uint64_t seed = 42;
  double dropout_rate = 0.1;
  int max_seq_len = kDefaultMaxSeqLen;
  int dim = 64;
  int hidden = 0;  // 0 means 3 * dim
  int min_count = 1;
  bool use_positional = true;

  std::optional<std::filesystem::path> checkpoint_path;  // rewritten every epoch
  std::optional<std::filesystem::path> log_path;         // per-epoch metrics
  std::optional<std::filesystem::path> pretrained_path;  // text embeddings

  int hidden_dim() const { return hidden > 0 ? hidden : 3 * dim; }
  // Throws UsageError on out-of-range values.
  void check() const;
  // Stable hash over the hyperparameters (paths excluded).
  std::string hash() const;
  std::string describe() const;
};

// Deterministic seed derivation: mixes a root seed with a stream of labels.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> labels);

struct Batch {
  using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  IndexMatrix tokens;  // B x padded length, Vocab::kPad beyond each length
  std::vector<int> lengths;
  std::vector<TagMatrix> gold;
  std::vector<CellMask> masks;
  std::vector<std::size_t> sentence_ids;  // positions in the source corpus

  int size() const { return static_cast<int>(lengths.size()); }
  int padded_length() const { return static_cast<int>(tokens.cols()); }
  std::span<const int> row(int b) const {
    return {tokens.data() + static_cast<std::ptrdiff_t>(b) * tokens.cols(),
            static_cast<std::size_t>(lengths[b])};
  }
};

std::vector<Batch> make_batches(const std::vector<AnnotatedSentence>& corpus, int num_relations,
                                const Vocab& vocab, int batch_size, std::uint64_t shuffle_seed);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct ParamGroup {
  std::string name;
  std::span<double> values;
  std::span<const double> grads;
};

struct AdamState {
  long step = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
};

// One bias-corrected Adam update over all groups. Every gradient is checked
// before anything is modified; a non-finite entry raises NumericError naming
// its group.
void adam_step(std::span<const ParamGroup> groups, AdamState& state, const AdamConfig& config);

// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
  std::vector<std::string> warnings;
};

// Called after every epoch; returning false ends training.
using EpochCallback = std::function<bool(const EpochLog&, const Model&)>;

TrainResult train(const Corpus& corpus, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Mean training loss of one sentence under the model, dropout off.
double sentence_loss(const AnnotatedSentence& s, const Model& model);

struct Prediction {
  TripleSet triples;
  std::optional<std::string> warning;  // set when the sentence was truncated
};

Prediction predict(const Sentence& s, const Model& model);

}  // namespace onerel
