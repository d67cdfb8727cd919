#pragma once

// Relation-specific horns tagging: every triple (head, k, tail) marks the
// three corners of the head-rows x tail-columns rectangle in relation k's
// sub-matrix.
//
//   (head.begin, k, tail.begin)  HB-TB
//   (head.begin, k, tail.end)    HB-TE   <- anchor shared by the pair
//   (head.end,   k, tail.end)    HE-TE
//
// Decoding walks the HB-TE anchors and splices the head down its column to
// the nearest HE-TE and the tail left along its row to the nearest HB-TB.

#include <array>
#include <compare>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "onerel/corpus.hpp"

namespace onerel {

enum class Tag : int { kNone = 0, kHbTb = 1, kHbTe = 2, kHeTe = 3 };
inline constexpr int kNumTags = 4;

std::string_view tag_name(Tag tag);

// Collision priority: HB-TE > HE-TE > HB-TB > NONE.
int tag_priority(Tag tag);

struct Cell {
  int row = 0;
  int relation = 0;
  int col = 0;

  // Ordered by relation first so one relation's cells are contiguous.
  auto operator<=>(const Cell& o) const {
    if (auto c = relation <=> o.relation; c != 0) return c;
    if (auto c = row <=> o.row; c != 0) return c;
    return col <=> o.col;
  }
  bool operator==(const Cell&) const = default;
};

// Sparse L x K x L tag store; absent cells are NONE.
class TagMatrix {
 public:
  TagMatrix() = default;
  TagMatrix(int length, int num_relations);

  int length() const { return length_; }
  int num_relations() const { return num_relations_; }

  Tag get(const Cell& cell) const;
  Tag get(int row, int relation, int col) const { return get(Cell{row, relation, col}); }
  // Setting NONE erases the cell. Throws UsageError for out-of-range cells.
  void set(const Cell& cell, Tag tag);

  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  const std::map<Cell, Tag>& cells() const { return cells_; }

  bool operator==(const TagMatrix&) const = default;

 private:
  void check(const Cell& cell) const;

  int length_ = 0;
  int num_relations_ = 0;
  std::map<Cell, Tag> cells_;
};

struct Collision {
  enum class Kind {
    // Two triples assigned different tags to one cell; the lower-priority
    // tag was dropped.
    kOverwrite,
    // Tags from other triples sit between this triple's corners, so the
    // nearest-match splice picks the wrong boundary.
    kSpliceInterference,
  };

  Kind kind = Kind::kOverwrite;
  Cell cell;
  Triple triple;  // the triple whose encoding was damaged
  Tag kept = Tag::kNone;
  Tag dropped = Tag::kNone;
};

struct Encoding {
  TagMatrix matrix;
  std::vector<Collision> collisions;

  bool collision_free() const { return collisions.empty(); }
};

// Throws UsageError when a relation index is >= num_relations.
Encoding encode(const AnnotatedSentence& s, int num_relations);

TripleSet decode(const TagMatrix& m);

struct RoundtripResult {
  bool exact = false;
  TripleSet missing;   // gold triples not recovered
  TripleSet spurious;  // decoded triples absent from gold
};

RoundtripResult roundtrip_check(const AnnotatedSentence& s, int num_relations);

// Fixed-width grid for one relation: rows are head tokens, columns are tail
// tokens; cells show "-", "HB-TB", "HB-TE" or "HE-TE".
std::string render_relation(const TagMatrix& m, int relation,
                            const std::vector<std::string>& tokens);

}  // namespace onerel
