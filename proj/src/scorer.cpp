#include "onerel/scorer.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "onerel/errors.hpp"

namespace onerel {

namespace {

void glorot(Eigen::MatrixXd& m, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng);
}

void check_grid(const ScoreGrid& grid) {
  const long pairs = static_cast<long>(grid.length) * grid.length;
  if (grid.scores.rows() != grid.num_relations * kNumTags || grid.scores.cols() != pairs)
    throw UsageError("score grid has inconsistent shape");
}

void check_mask(const ScoreGrid& grid, const CellMask& mask) {
  if (mask.padded_length() != grid.length || mask.num_relations() != grid.num_relations)
    throw UsageError(fmt::format("mask {}x{} does not match grid {}x{}", mask.padded_length(),
                                 mask.num_relations(), grid.length, grid.num_relations));
}

// Dense gold tags, index pair * K + relation.
std::vector<Tag> dense_gold(const ScoreGrid& grid, const TagMatrix& gold, const CellMask& mask) {
  if (gold.num_relations() != grid.num_relations)
    throw UsageError(fmt::format("gold has {} relations, grid has {}", gold.num_relations(),
                                 grid.num_relations));
  if (gold.length() > grid.length || gold.length() < mask.valid_length())
    throw UsageError(fmt::format("gold length {} incompatible with grid {} / valid {}",
                                 gold.length(), grid.length, mask.valid_length()));
  std::vector<Tag> dense(static_cast<std::size_t>(grid.length) * grid.length * grid.num_relations,
                         Tag::kNone);
  for (const auto& [cell, tag] : gold.cells())
    dense[static_cast<std::size_t>(grid.pair(cell.row, cell.col)) * grid.num_relations +
          cell.relation] = tag;
  return dense;
}

// log-softmax of the four scores starting at `v`, evaluated at `tag`.
double log_prob(const double* v, int tag) {
  double m = v[0];
  for (int t = 1; t < kNumTags; ++t) m = std::max(m, v[t]);
  double z = 0;
  for (int t = 0; t < kNumTags; ++t) z += std::exp(v[t] - m);
  return v[tag] - m - std::log(z);
}

}  // namespace

ScorerParams ScorerParams::zeros(int dim, int hidden, int num_relations) {
  if (dim < 1 || hidden < 1 || num_relations < 1)
    throw UsageError("scorer dimensions must be positive");
  ScorerParams p;
  p.W = Eigen::MatrixXd::Zero(hidden, 2 * dim);
  p.b = Eigen::VectorXd::Zero(hidden);
  p.R = Eigen::MatrixXd::Zero(hidden, kNumTags * num_relations);
  return p;
}

ScorerParams ScorerParams::init(int dim, int hidden, int num_relations, double dropout_rate,
                                std::uint64_t seed) {
  auto p = zeros(dim, hidden, num_relations);
  p.dropout_rate = dropout_rate;
  std::mt19937_64 rng(seed);
  glorot(p.W, 2 * dim, hidden, rng);
  glorot(p.R, hidden, kNumTags * num_relations, rng);
  p.check();
  return p;
}

void ScorerParams::check() const {
  if (W.rows() < 1 || W.cols() < 2 || W.cols() % 2 != 0 || b.size() != W.rows() ||
      R.rows() != W.rows() || R.cols() < kNumTags || R.cols() % kNumTags != 0)
    throw UsageError("scorer parameters have inconsistent shapes");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw UsageError(fmt::format("dropout rate {} outside [0, 1)", dropout_rate));
  if (!W.allFinite() || !b.allFinite() || !R.allFinite())
    throw NumericError("scorer parameters contain non-finite values");
}

CellMask::CellMask(int padded_length, int valid_length, int num_relations)
    : padded_length_(padded_length),
      valid_length_(valid_length),
      relations_(static_cast<std::size_t>(std::max(num_relations, 0)), true) {
  if (valid_length < 0 || valid_length > padded_length || num_relations < 1)
    throw UsageError("invalid cell mask dimensions");
}

long CellMask::count() const {
  long enabled = 0;
  for (bool r : relations_) enabled += r ? 1 : 0;
  return static_cast<long>(valid_length_) * valid_length_ * enabled;
}

ScoreGrid score_all(const Eigen::MatrixXd& emb, const ScorerParams& params, bool training,
                    std::uint64_t rng_seed) {
  const int d = params.dim();
  if (emb.cols() != d || params.W.cols() != 2 * d)
    throw UsageError(fmt::format("embedding width {} does not match scorer dim {}", emb.cols(), d));
  params.check();

  const int length = static_cast<int>(emb.rows());
  const int hidden = params.hidden();
  ScoreGrid grid;
  grid.length = length;
  grid.num_relations = params.num_relations();

  const Eigen::MatrixXd head = params.W.leftCols(d) * emb.transpose();   // d_e x L
  const Eigen::MatrixXd tail = params.W.rightCols(d) * emb.transpose();  // d_e x L
  grid.hidden.resize(hidden, static_cast<Eigen::Index>(length) * length);
  for (int i = 0; i < length; ++i)
    for (int j = 0; j < length; ++j)
      grid.hidden.col(grid.pair(i, j)) = head.col(i) + tail.col(j) + params.b;

  if (training && params.dropout_rate > 0.0) {
    const double keep = 1.0 - params.dropout_rate;
    std::mt19937_64 rng(rng_seed);
    std::bernoulli_distribution bernoulli(keep);
    grid.dropout_mask.resize(grid.hidden.rows(), grid.hidden.cols());
    for (Eigen::Index n = 0; n < grid.dropout_mask.size(); ++n)
      grid.dropout_mask.data()[n] = bernoulli(rng) ? 1.0 / keep : 0.0;
    grid.hidden.array() *= grid.dropout_mask.array();
  }
  grid.hidden = grid.hidden.cwiseMax(0.0);
  grid.scores.noalias() = params.R.transpose() * grid.hidden;
  return grid;
}

Eigen::MatrixXd tag_distribution(const ScoreGrid& grid) {
  check_grid(grid);
  Eigen::MatrixXd probs(grid.scores.rows(), grid.scores.cols());
  for (Eigen::Index p = 0; p < grid.scores.cols(); ++p) {
    for (int k = 0; k < grid.num_relations; ++k) {
      const auto v = grid.scores.col(p).segment<kNumTags>(k * kNumTags);
      const auto e = (v.array() - v.maxCoeff()).exp();
      probs.col(p).segment<kNumTags>(k * kNumTags) = e / e.sum();
    }
  }
  return probs;
}

double loss(const ScoreGrid& grid, const TagMatrix& gold, const CellMask& mask) {
  check_grid(grid);
  check_mask(grid, mask);
  const long n = mask.count();
  if (n == 0) throw UsageError("loss over zero masked-in cells");
  const auto dense = dense_gold(grid, gold, mask);
  const int K = grid.num_relations;
  double total = 0;
  for (int i = 0; i < mask.valid_length(); ++i) {
    for (int j = 0; j < mask.valid_length(); ++j) {
      const int p = grid.pair(i, j);
      const double* col = grid.scores.col(p).data();
      for (int k = 0; k < K; ++k) {
        if (!mask.relation_enabled(k)) continue;
        const int tag = static_cast<int>(dense[static_cast<std::size_t>(p) * K + k]);
        total -= log_prob(col + k * kNumTags, tag);
      }
    }
  }
  return total / static_cast<double>(n);
}

Gradients Gradients::zeros_like(const ScorerParams& params, int length) {
  Gradients g;
  g.W = Eigen::MatrixXd::Zero(params.W.rows(), params.W.cols());
  g.b = Eigen::VectorXd::Zero(params.b.size());
  g.R = Eigen::MatrixXd::Zero(params.R.rows(), params.R.cols());
  g.emb = Eigen::MatrixXd::Zero(length, params.dim());
  return g;
}

Gradients backward(const ScoreGrid& grid, const TagMatrix& gold, const CellMask& mask,
                   const Eigen::MatrixXd& emb, const ScorerParams& params) {
  check_grid(grid);
  check_mask(grid, mask);
  const int length = grid.length;
  const int d = params.dim();
  const int K = grid.num_relations;
  if (emb.rows() != length || emb.cols() != d || grid.hidden.rows() != params.hidden() ||
      grid.hidden.cols() != grid.scores.cols() || params.num_relations() != K)
    throw UsageError("stale score grid: shapes do not match the embeddings or parameters");
  if (grid.dropout_mask.size() != 0 &&
      (grid.dropout_mask.rows() != grid.hidden.rows() || grid.dropout_mask.cols() != grid.hidden.cols()))
    throw UsageError("stale score grid: dropout mask shape mismatch");
  const long n = mask.count();
  if (n == 0) throw UsageError("backward over zero masked-in cells");
  const auto dense = dense_gold(grid, gold, mask);

  // d loss / d scores: (softmax - onehot) / n on masked-in cells.
  Eigen::MatrixXd dscores = Eigen::MatrixXd::Zero(grid.scores.rows(), grid.scores.cols());
  const double scale = 1.0 / static_cast<double>(n);
  for (int i = 0; i < mask.valid_length(); ++i) {
    for (int j = 0; j < mask.valid_length(); ++j) {
      const int p = grid.pair(i, j);
      for (int k = 0; k < K; ++k) {
        if (!mask.relation_enabled(k)) continue;
        const auto v = grid.scores.col(p).segment<kNumTags>(k * kNumTags);
        const auto e = (v.array() - v.maxCoeff()).exp();
        Eigen::Vector4d g = e / e.sum();
        g[static_cast<int>(dense[static_cast<std::size_t>(p) * K + k])] -= 1.0;
        dscores.col(p).segment<kNumTags>(k * kNumTags) = g * scale;
      }
    }
  }

  Gradients out;
  out.R.noalias() = grid.hidden * dscores.transpose();
  Eigen::MatrixXd dz = params.R * dscores;
  dz.array() *= (grid.hidden.array() > 0.0).cast<double>();
  if (grid.dropout_mask.size() != 0) dz.array() *= grid.dropout_mask.array();
  out.b = dz.rowwise().sum();

  Eigen::MatrixXd dhead = Eigen::MatrixXd::Zero(params.hidden(), length);
  Eigen::MatrixXd dtail = Eigen::MatrixXd::Zero(params.hidden(), length);
  for (int i = 0; i < length; ++i) {
    for (int j = 0; j < length; ++j) {
      const auto col = dz.col(grid.pair(i, j));
      dhead.col(i) += col;
      dtail.col(j) += col;
    }
  }
  out.W.resize(params.hidden(), 2 * d);
  out.W.leftCols(d).noalias() = dhead * emb;
  out.W.rightCols(d).noalias() = dtail * emb;
  out.emb.noalias() = dhead.transpose() * params.W.leftCols(d);
  out.emb.noalias() += dtail.transpose() * params.W.rightCols(d);
  return out;
}

TagMatrix predict_tags(const ScoreGrid& grid, const CellMask& mask) {
  check_grid(grid);
  check_mask(grid, mask);
  TagMatrix out(mask.valid_length(), grid.num_relations);
  for (int i = 0; i < mask.valid_length(); ++i) {
    for (int j = 0; j < mask.valid_length(); ++j) {
      const double* col = grid.scores.col(grid.pair(i, j)).data();
      for (int k = 0; k < grid.num_relations; ++k) {
        if (!mask.relation_enabled(k)) continue;
        const double* v = col + k * kNumTags;
        int best = 0;
        bool tied = false;
        for (int t = 1; t < kNumTags; ++t) {
          if (v[t] > v[best]) {
            best = t;
            tied = false;
          } else if (v[t] == v[best]) {
            tied = true;
          }
        }
        if (!tied && best != 0) out.set(Cell{i, k, j}, static_cast<Tag>(best));
      }
    }
  }
  return out;
}

}  // namespace onerel
