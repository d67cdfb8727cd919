#include "onerel/tagging.hpp"

#include <algorithm>
#include <sstream>

#include <fmt/format.h>

#include "onerel/errors.hpp"

namespace onerel {

std::string_view tag_name(Tag tag) {
  switch (tag) {
    case Tag::kNone: return "-";
    case Tag::kHbTb: return "HB-TB";
    case Tag::kHbTe: return "HB-TE";
    case Tag::kHeTe: return "HE-TE";
  }
  return "?";
}

int tag_priority(Tag tag) {
  switch (tag) {
    case Tag::kHbTe: return 3;
    case Tag::kHeTe: return 2;
    case Tag::kHbTb: return 1;
    case Tag::kNone: return 0;
  }
  return 0;
}

TagMatrix::TagMatrix(int length, int num_relations)
    : length_(length), num_relations_(num_relations) {
  if (length < 0 || num_relations < 0) throw UsageError("TagMatrix dimensions must be >= 0");
}

void TagMatrix::check(const Cell& c) const {
  if (c.row < 0 || c.row >= length_ || c.col < 0 || c.col >= length_ || c.relation < 0 ||
      c.relation >= num_relations_)
    throw UsageError(fmt::format("cell ({}, {}, {}) outside {} x {} x {}", c.row, c.relation, c.col,
                                 length_, num_relations_, length_));
}

Tag TagMatrix::get(const Cell& cell) const {
  check(cell);
  auto it = cells_.find(cell);
  return it == cells_.end() ? Tag::kNone : it->second;
}

void TagMatrix::set(const Cell& cell, Tag tag) {
  check(cell);
  if (tag == Tag::kNone)
    cells_.erase(cell);
  else
    cells_[cell] = tag;
}

namespace {

struct Assignment {
  Cell cell;
  Tag tag;
};

std::array<Assignment, 3> corners(const Triple& t) {
  return {Assignment{{t.head.begin, t.relation, t.tail.begin}, Tag::kHbTb},
          Assignment{{t.head.begin, t.relation, t.tail.end}, Tag::kHbTe},
          Assignment{{t.head.end, t.relation, t.tail.end}, Tag::kHeTe}};
}

// Per-relation lookup tables used by the splice: HE-TE rows by column and
// HB-TB columns by row, both sorted ascending.
struct SpliceIndex {
  std::map<int, std::vector<int>> he_te_rows;
  std::map<int, std::vector<int>> hb_tb_cols;
  std::vector<std::pair<int, int>> anchors;  // (row, col) of HB-TE

  // Smallest row >= hb holding HE-TE in column te; hb when none.
  int head_end(int hb, int te) const {
    auto it = he_te_rows.find(te);
    if (it == he_te_rows.end()) return hb;
    auto r = std::lower_bound(it->second.begin(), it->second.end(), hb);
    return r == it->second.end() ? hb : *r;
  }
  // Largest column <= te holding HB-TB in row hb; te when none.
  int tail_begin(int hb, int te) const {
    auto it = hb_tb_cols.find(hb);
    if (it == hb_tb_cols.end()) return te;
    auto c = std::upper_bound(it->second.begin(), it->second.end(), te);
    return c == it->second.begin() ? te : *std::prev(c);
  }
};

std::map<int, SpliceIndex> build_index(const TagMatrix& m) {
  std::map<int, SpliceIndex> index;
  // cells() iterates in (relation, row, col) order, so the vectors come out sorted.
  for (const auto& [cell, tag] : m.cells()) {
    auto& idx = index[cell.relation];
    switch (tag) {
      case Tag::kHeTe: idx.he_te_rows[cell.col].push_back(cell.row); break;
      case Tag::kHbTb: idx.hb_tb_cols[cell.row].push_back(cell.col); break;
      case Tag::kHbTe: idx.anchors.emplace_back(cell.row, cell.col); break;
      case Tag::kNone: break;
    }
  }
  for (auto& [rel, idx] : index)
    for (auto& [col, rows] : idx.he_te_rows) std::sort(rows.begin(), rows.end());
  return index;
}

}  // namespace

Encoding encode(const AnnotatedSentence& s, int num_relations) {
  const int length = s.sentence.length();
  Encoding out{TagMatrix(length, num_relations), {}};

  struct Owner {
    Triple triple;
    Tag tag;
  };
  std::map<Cell, std::vector<Owner>> owners;
  for (const auto& t : s.triples) {
    if (t.relation < 0 || t.relation >= num_relations)
      throw UsageError(fmt::format("relation index {} outside [0, {})", t.relation, num_relations));
    for (const auto& a : corners(t)) {
      auto& list = owners[a.cell];
      // A triple with a single-token entity assigns one cell twice; only the
      // higher-priority tag is a real claim.
      auto same = std::find_if(list.begin(), list.end(),
                               [&](const Owner& o) { return o.triple == t; });
      if (same == list.end())
        list.push_back({t, a.tag});
      else if (tag_priority(a.tag) > tag_priority(same->tag))
        same->tag = a.tag;
    }
  }

  for (const auto& [cell, list] : owners) {
    Tag kept = Tag::kNone;
    for (const auto& o : list)
      if (tag_priority(o.tag) > tag_priority(kept)) kept = o.tag;
    out.matrix.set(cell, kept);
    for (const auto& o : list) {
      if (o.tag != kept)
        out.collisions.push_back({Collision::Kind::kOverwrite, cell, o.triple, kept, o.tag});
    }
  }

  const auto index = build_index(out.matrix);
  for (const auto& t : s.triples) {
    const auto& idx = index.at(t.relation);
    const int he = idx.head_end(t.head.begin, t.tail.end);
    if (he != t.head.end) {
      out.collisions.push_back({Collision::Kind::kSpliceInterference,
                                Cell{he, t.relation, t.tail.end}, t,
                                out.matrix.get(he, t.relation, t.tail.end), Tag::kHeTe});
    }
    const int tb = idx.tail_begin(t.head.begin, t.tail.end);
    if (tb != t.tail.begin) {
      out.collisions.push_back({Collision::Kind::kSpliceInterference,
                                Cell{t.head.begin, t.relation, tb}, t,
                                out.matrix.get(t.head.begin, t.relation, tb), Tag::kHbTb});
    }
  }
  return out;
}

TripleSet decode(const TagMatrix& m) {
  TripleSet out;
  for (const auto& [relation, idx] : build_index(m)) {
    for (const auto& [hb, te] : idx.anchors) {
      const int he = idx.head_end(hb, te);
      const int tb = idx.tail_begin(hb, te);
      if (hb <= he && tb <= te) out.insert(Triple{Span{hb, he}, relation, Span{tb, te}});
    }
  }
  return out;
}

RoundtripResult roundtrip_check(const AnnotatedSentence& s, int num_relations) {
  const auto decoded = decode(encode(s, num_relations).matrix);
  RoundtripResult r;
  std::set_difference(s.triples.begin(), s.triples.end(), decoded.begin(), decoded.end(),
                      std::inserter(r.missing, r.missing.end()));
  std::set_difference(decoded.begin(), decoded.end(), s.triples.begin(), s.triples.end(),
                      std::inserter(r.spurious, r.spurious.end()));
  r.exact = r.missing.empty() && r.spurious.empty();
  return r;
}

std::string render_relation(const TagMatrix& m, int relation,
                            const std::vector<std::string>& tokens) {
  const int length = m.length();
  if (static_cast<int>(tokens.size()) != length)
    throw UsageError("token count does not match the tag matrix length");
  constexpr int kMaxLabel = 12;
  int width = 5;
  int label = 1;
  for (const auto& t : tokens) {
    width = std::max(width, std::min<int>(static_cast<int>(t.size()), kMaxLabel));
    label = std::max(label, std::min<int>(static_cast<int>(t.size()), kMaxLabel));
  }
  const int index_width = static_cast<int>(std::to_string(std::max(length - 1, 0)).size());
  auto clip = [](const std::string& s) {
    return s.size() > static_cast<std::size_t>(kMaxLabel) ? s.substr(0, kMaxLabel) : s;
  };

  std::ostringstream out;
  const std::string margin(index_width + 1 + label, ' ');
  out << margin;
  for (int j = 0; j < length; ++j) out << ' ' << fmt::format("{:<{}}", j, width);
  out << '\n' << margin;
  for (int j = 0; j < length; ++j) out << ' ' << fmt::format("{:<{}}", clip(tokens[j]), width);
  out << '\n';
  for (int i = 0; i < length; ++i) {
    out << fmt::format("{:>{}} {:<{}}", i, index_width, clip(tokens[i]), label);
    for (int j = 0; j < length; ++j)
      out << ' ' << fmt::format("{:<{}}", tag_name(m.get(i, relation, j)), width);
    out << '\n';
  }
  return out.str();
}

}  // namespace onerel
