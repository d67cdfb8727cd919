#include "onerel/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "onerel/errors.hpp"

namespace onerel {

void TrainConfig::check() const {
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw UsageError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw UsageError("Adam epsilon must be positive");
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw UsageError("dropout must lie in [0, 1)");
  if (max_seq_len < 1) throw UsageError("max_seq_len must be >= 1");
  if (dim < 1 || hidden < 0) throw UsageError("dimensions must be positive");
  if (min_count < 1) throw UsageError("min_count must be >= 1");
}

std::string TrainConfig::describe() const {
  return fmt::format(
      "batch_size={} lr={} beta1={} beta2={} epsilon={} epochs={} seed={} dropout={} "
      "max_seq_len={} dim={} hidden={} min_count={} positional={}",
      batch_size, learning_rate, adam_beta1, adam_beta2, adam_epsilon, epochs, seed, dropout_rate,
      max_seq_len, dim, hidden_dim(), min_count, use_positional);
}

std::string TrainConfig::hash() const {
  // FNV-1a, 64 bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : describe()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> labels) {
  // splitmix64 finaliser applied after folding in each label.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t s = mix(root);
  for (auto l : labels) s = mix(s ^ mix(l));
  return s;
}

std::vector<Batch> make_batches(const std::vector<AnnotatedSentence>& corpus, int num_relations,
                                const Vocab& vocab, int batch_size, std::uint64_t shuffle_seed) {
  if (corpus.empty()) throw UsageError("cannot batch an empty corpus");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    Batch batch;
    int padded = 0;
    for (std::size_t n = start; n < stop; ++n)
      padded = std::max(padded, corpus[order[n]].sentence.length());
    batch.tokens = Batch::IndexMatrix::Constant(static_cast<int>(stop - start), padded, Vocab::kPad);
    for (std::size_t n = start; n < stop; ++n) {
      const auto& s = corpus[order[n]];
      const int b = static_cast<int>(n - start);
      const int length = s.sentence.length();
      const auto idx = vocab.indices(s.sentence.tokens);
      for (int i = 0; i < length; ++i) batch.tokens(b, i) = idx[i];
      batch.lengths.push_back(length);
      batch.gold.push_back(encode(s, num_relations).matrix);
      batch.masks.emplace_back(padded, length, num_relations);
      batch.sentence_ids.push_back(order[n]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

void adam_step(std::span<const ParamGroup> groups, AdamState& state, const AdamConfig& config) {
  for (const auto& g : groups) {
    if (g.values.size() != g.grads.size())
      throw UsageError(fmt::format("parameter group '{}': {} values but {} gradients", g.name,
                                   g.values.size(), g.grads.size()));
    for (double x : g.grads)
      if (!std::isfinite(x))
        throw NumericError(fmt::format("non-finite gradient in parameter group '{}'", g.name));
  }
  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (const auto& g : groups) {
    auto& [m, v] = state.moments[g.name];
    if (m.empty()) {
      m.assign(g.values.size(), 0.0);
      v.assign(g.values.size(), 0.0);
    }
    if (m.size() != g.values.size())
      throw UsageError(fmt::format("parameter group '{}' changed size", g.name));
    for (std::size_t n = 0; n < g.values.size(); ++n) {
      const double grad = g.grads[n];
      m[n] = config.beta1 * m[n] + (1.0 - config.beta1) * grad;
      v[n] = config.beta2 * v[n] + (1.0 - config.beta2) * grad * grad;
      const double m_hat = m[n] / correction1;
      const double v_hat = v[n] / correction2;
      g.values[n] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

namespace {

std::span<double> values_of(Eigen::MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<double> values_of(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

struct Accumulator {
  Gradients scorer;
  Eigen::MatrixXd tokens;
  Eigen::MatrixXd positions;

  explicit Accumulator(const Model& model)
      : scorer(Gradients::zeros_like(model.scorer, 0)),
        tokens(Eigen::MatrixXd::Zero(model.embeddings.tokens.rows(), model.embeddings.tokens.cols())),
        positions(Eigen::MatrixXd::Zero(model.embeddings.positions.rows(),
                                        model.embeddings.positions.cols())) {}
};

}  // namespace

TrainResult train(const Corpus& corpus, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.check();
  if (corpus.sentences.empty()) throw DataError("training corpus is empty");
  const int K = corpus.relations.size();
  if (K < 1) throw DataError("training corpus has no relations");

  TrainResult result;
  std::vector<AnnotatedSentence> sentences = corpus.sentences;
  for (auto& s : sentences) {
    validate(s, K);
    truncate(s, config.max_seq_len, result.warnings);
  }

  Model& model = result.model;
  model.relations = corpus.relations;
  model.vocab = build_vocab(sentences, config.min_count);
  model.use_positional = config.use_positional;
  model.max_seq_len = config.max_seq_len;
  model.config_hash = config.hash();
  model.embeddings =
      EmbeddingTable::random(model.vocab.size(), config.dim,
                             config.use_positional ? config.max_seq_len : 0,
                             derive_seed(config.seed, {1}));
  if (config.pretrained_path) import_pretrained(*config.pretrained_path, model.vocab, model.embeddings);
  model.scorer = ScorerParams::init(config.dim, config.hidden_dim(), K, config.dropout_rate,
                                    derive_seed(config.seed, {2}));

  std::optional<std::ofstream> log_file;
  if (config.log_path) {
    log_file.emplace(*config.log_path);
    if (!*log_file) throw DataError(fmt::format("cannot write log '{}'", config.log_path->string()));
    *log_file << "epoch\tmean_loss\tseconds\n";
  }

  const AdamConfig adam{config.learning_rate, config.adam_beta1, config.adam_beta2,
                        config.adam_epsilon};
  AdamState state;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto batches = make_batches(sentences, K, model.vocab, config.batch_size,
                                      derive_seed(config.seed, {3, static_cast<std::uint64_t>(epoch)}));
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      Accumulator acc(model);
      const double inv_batch = 1.0 / batch.size();
      // Each row is scored at its true length: masked-out padding cells add
      // nothing to the loss or its gradients, so trimming is equivalent.
      for (int b = 0; b < batch.size(); ++b) {
        const auto indices = batch.row(b);
        const int length = batch.lengths[b];
        const auto emb = encode_indices(indices, model.embeddings, model.use_positional);
        const auto grid = score_all(emb, model.scorer, true,
                                    derive_seed(config.seed, {4, static_cast<std::uint64_t>(state.step + 1),
                                                              static_cast<std::uint64_t>(b)}));
        const CellMask mask(length, K);
        loss_sum += loss(grid, batch.gold[b], mask);
        const auto g = backward(grid, batch.gold[b], mask, emb, model.scorer);
        acc.scorer.W += g.W * inv_batch;
        acc.scorer.b += g.b * inv_batch;
        acc.scorer.R += g.R * inv_batch;
        for (int i = 0; i < length; ++i) {
          acc.tokens.row(indices[i]) += g.emb.row(i) * inv_batch;
          if (model.use_positional && model.embeddings.has_positions())
            acc.positions.row(i) += g.emb.row(i) * inv_batch;
        }
      }
      std::vector<ParamGroup> groups{
          {"W", values_of(model.scorer.W), values_of(acc.scorer.W)},
          {"b", values_of(model.scorer.b), values_of(acc.scorer.b)},
          {"R", values_of(model.scorer.R), values_of(acc.scorer.R)},
          {"token_embeddings", values_of(model.embeddings.tokens), values_of(acc.tokens)},
      };
      if (model.embeddings.has_positions())
        groups.push_back({"position_embeddings", values_of(model.embeddings.positions),
                          values_of(acc.positions)});
      adam_step(groups, state, adam);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(sentences.size());
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!std::isfinite(entry.mean_loss))
      throw NumericError(fmt::format("epoch {}: loss is not finite", epoch));
    result.log.push_back(entry);
    if (log_file)
      *log_file << fmt::format("{}\t{}\t{:.3f}\n", entry.epoch, entry.mean_loss, entry.seconds)
                << std::flush;
    if (config.checkpoint_path) save_checkpoint(*config.checkpoint_path, model);
    if (on_epoch && !on_epoch(entry, model)) break;
  }
  return result;
}

double sentence_loss(const AnnotatedSentence& s, const Model& model) {
  const int K = model.relations.size();
  const auto emb = encode_tokens(s.sentence, model.embeddings, model.vocab, model.use_positional);
  const auto grid = score_all(emb, model.scorer, false, 0);
  return loss(grid, encode(s, K).matrix, CellMask(s.sentence.length(), K));
}

Prediction predict(const Sentence& s, const Model& model) {
  Prediction out;
  Sentence view = s;
  if (view.length() > model.max_seq_len) {
    out.warning = fmt::format("sentence '{}' truncated from {} to {} tokens", s.id, s.length(),
                              model.max_seq_len);
    view.tokens.resize(model.max_seq_len);
  }
  if (view.length() == 0) return out;
  const auto emb = encode_tokens(view, model.embeddings, model.vocab, model.use_positional);
  const auto grid = score_all(emb, model.scorer, false, 0);
  out.triples = decode(predict_tags(grid, CellMask(view.length(), model.relations.size())));
  return out;
}

}  // namespace onerel
