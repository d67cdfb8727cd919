#pragma once

// Scoring-based classifier. For every ordered token pair (i, j):
//
//   h_ij = relu(drop(W [e_i; e_j] + b))        d_e hidden units
//   v_ij = R^T h_ij                            4K scores, tag t of relation k
//                                              at row 4k + t
//
// followed by a per-(i, k, j) softmax over the four tags and the mean
// negative log-likelihood of the gold tags over the valid cells.
//
// W [e_i; e_j] is evaluated as W_head e_i + W_tail e_j, so the pair grid costs
// O(L^2 d_e) instead of O(L^2 d_e d).

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "onerel/tagging.hpp"

namespace onerel {

struct ScorerParams {
  Eigen::MatrixXd W;  // d_e x 2d; columns [0, d) act on e_i, [d, 2d) on e_j
  Eigen::VectorXd b;  // d_e
  Eigen::MatrixXd R;  // d_e x 4K
  double dropout_rate = 0.0;

  int dim() const { return static_cast<int>(W.cols() / 2); }
  int hidden() const { return static_cast<int>(W.rows()); }
  int num_relations() const { return static_cast<int>(R.cols() / kNumTags); }

  // W and R Glorot-uniform, b zero.
  static ScorerParams init(int dim, int hidden, int num_relations, double dropout_rate,
                           std::uint64_t seed);
  static ScorerParams zeros(int dim, int hidden, int num_relations);

  // Throws UsageError on inconsistent shapes or a bad dropout rate, and
  // NumericError on non-finite entries.
  void check() const;
};

// Which (i, k, j) cells of a possibly padded grid take part in the loss and
// in prediction: rows and columns below `valid_length` and enabled relations.
class CellMask {
 public:
  CellMask(int length, int num_relations) : CellMask(length, length, num_relations) {}
  CellMask(int padded_length, int valid_length, int num_relations);

  int padded_length() const { return padded_length_; }
  int valid_length() const { return valid_length_; }
  int num_relations() const { return static_cast<int>(relations_.size()); }

  void set_relation(int relation, bool enabled) { relations_.at(relation) = enabled; }
  bool relation_enabled(int relation) const { return relations_[relation]; }
  bool admits(int row, int relation, int col) const {
    return row < valid_length_ && col < valid_length_ && relations_[relation];
  }
  long count() const;

 private:
  int padded_length_;
  int valid_length_;
  std::vector<bool> relations_;
};

struct ScoreGrid {
  int length = 0;
  int num_relations = 0;
  Eigen::MatrixXd scores;        // 4K x L*L, column i*L + j
  Eigen::MatrixXd hidden;        // d_e x L*L, post-rectifier activations
  Eigen::MatrixXd dropout_mask;  // d_e x L*L scaled keep mask; empty at inference

  int pair(int row, int col) const { return row * length + col; }
  double score(int row, int relation, Tag tag, int col) const {
    return scores(relation * kNumTags + static_cast<int>(tag), pair(row, col));
  }
};

// emb is L x d. With training set and a positive dropout rate, inverted
// dropout is applied to the pre-activation before the rectifier.
ScoreGrid score_all(const Eigen::MatrixXd& emb, const ScorerParams& params, bool training,
                    std::uint64_t rng_seed);

// Softmax over each 4-score block, same layout as grid.scores.
Eigen::MatrixXd tag_distribution(const ScoreGrid& grid);

// Mean of -log p(gold) over the masked-in cells. gold may be shorter than the
// grid (padding) but must have the same relation count.
double loss(const ScoreGrid& grid, const TagMatrix& gold, const CellMask& mask);

struct Gradients {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  Eigen::MatrixXd R;
  Eigen::MatrixXd emb;  // L x d

  static Gradients zeros_like(const ScorerParams& params, int length);
};

Gradients backward(const ScoreGrid& grid, const TagMatrix& gold, const CellMask& mask,
                   const Eigen::MatrixXd& emb, const ScorerParams& params);

// Argmax per masked-in cell; any tie for the maximum yields NONE.
TagMatrix predict_tags(const ScoreGrid& grid, const CellMask& mask);

}  // namespace onerel
