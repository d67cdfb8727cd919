#include "onerel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "onerel/errors.hpp"
#include "onerel/tagging.hpp"

namespace onerel {

void SynthConfig::check() const {
  if (count < 1) throw UsageError("synthetic corpus needs count >= 1");
  if (num_relations < 1) throw UsageError("synthetic corpus needs at least one relation");
  double total = 0;
  for (double p : mix) {
    if (!(p >= 0.0)) throw UsageError("pattern fractions must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw UsageError(fmt::format("pattern fractions sum to {}, expected 1", total));
  if (mix[static_cast<int>(Pattern::kEPO)] > 0 && num_relations < 2)
    throw UsageError("EPO sentences need two distinct relations (num_relations >= 2)");
  if (min_length < 1 || max_length < min_length) throw UsageError("bad sentence length range");
  if (max_length < 6) throw UsageError("max_length must be >= 6 to fit every pattern");
  if (token_pool < max_length) throw UsageError("token_pool must be >= max_length");
  if (max_extra_triples < 0) throw UsageError("max_extra_triples must be >= 0");
}

namespace {

class Planner {
 public:
  Planner(std::mt19937_64& rng, int num_relations) : rng_(rng), K_(num_relations) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  int relation() { return uniform(0, K_ - 1); }
  int other_relation(int r) {
    int s = uniform(0, K_ - 2);
    return s >= r ? s + 1 : s;
  }

  // Entity of 1-3 tokens in a block of its own.
  int entity() {
    const int roll = uniform(0, 9);
    return block_entity(roll < 5 ? 1 : roll < 8 ? 2 : 3);
  }
  int last_block() const { return static_cast<int>(blocks_.size()) - 1; }
  int block_entity(int length) {
    blocks_.push_back(length);
    return add(static_cast<int>(blocks_.size()) - 1, 0, length);
  }
  int add(int block, int offset, int length) {
    entities_.push_back({block, offset, length});
    return static_cast<int>(entities_.size()) - 1;
  }
  void triple(int head, int rel, int tail) { triples_.push_back({head, rel, tail}); }

  // Lays blocks out in random order with random filler between them.
  std::optional<AnnotatedSentence> realise(const SynthConfig& cfg, int serial) {
    const int used = std::accumulate(blocks_.begin(), blocks_.end(), 0);
    if (used > cfg.max_length) return std::nullopt;
    const int length = uniform(std::max(cfg.min_length, used), cfg.max_length);
    std::vector<int> order(blocks_.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<int> gaps(blocks_.size() + 1, 0);
    for (int f = 0; f < length - used; ++f) ++gaps[uniform(0, static_cast<int>(gaps.size()) - 1)];
    std::vector<int> start(blocks_.size());
    int pos = 0;
    for (std::size_t n = 0; n < order.size(); ++n) {
      pos += gaps[n];
      start[order[n]] = pos;
      pos += blocks_[order[n]];
    }

    AnnotatedSentence s;
    s.sentence.id = fmt::format("synth-{:06d}", serial);
    std::unordered_set<int> taken;
    while (static_cast<int>(s.sentence.tokens.size()) < length) {
      const int w = uniform(0, cfg.token_pool - 1);
      if (taken.insert(w).second) s.sentence.tokens.push_back(fmt::format("w{:04d}", w));
    }
    auto span_of = [&](int e) {
      const auto& ent = entities_[e];
      const int b = start[ent.block] + ent.offset;
      return Span{b, b + ent.length - 1};
    };
    for (const auto& t : triples_) s.triples.insert(Triple{span_of(t.head), t.rel, span_of(t.tail)});
    return s;
  }

 private:
  struct Entity {
    int block, offset, length;
  };
  struct PlannedTriple {
    int head, rel, tail;
  };
  std::mt19937_64& rng_;
  int K_;
  std::vector<int> blocks_;
  std::vector<Entity> entities_;
  std::vector<PlannedTriple> triples_;
};

void plan_pattern(Planner& p, Pattern pattern) {
  switch (pattern) {
    case Pattern::kNormal:
      p.triple(p.entity(), p.relation(), p.entity());
      break;
    case Pattern::kEPO: {
      const int a = p.entity(), b = p.entity();
      const int r1 = p.relation(), r2 = p.other_relation(r1);
      p.triple(a, r1, b);
      if (p.uniform(0, 1) == 0)
        p.triple(a, r2, b);
      else
        p.triple(b, r2, a);
      break;
    }
    case Pattern::kSEO: {
      const int a = p.entity(), b = p.entity(), c = p.entity();
      switch (p.uniform(0, 2)) {
        case 0:  // shared head
          p.triple(a, p.relation(), b);
          p.triple(a, p.relation(), c);
          break;
        case 1:  // shared tail
          p.triple(a, p.relation(), c);
          p.triple(b, p.relation(), c);
          break;
        default:  // chain
          p.triple(a, p.relation(), b);
          p.triple(b, p.relation(), c);
          break;
      }
      break;
    }
    case Pattern::kHTO: {
      if (p.uniform(0, 2) == 0) {  // head and tail are the same words
        const int e = p.block_entity(p.uniform(1, 3));
        p.triple(e, p.relation(), e);
        break;
      }
      // One entity nested inside the other, e.g. "New York City" / "New York".
      const int outer_len = p.uniform(2, 4);
      const int outer = p.block_entity(outer_len);
      const int inner_len = p.uniform(1, outer_len - 1);
      const int inner = p.add(p.last_block(), p.uniform(0, outer_len - inner_len), inner_len);
      if (p.uniform(0, 1) == 0)
        p.triple(outer, p.relation(), inner);
      else
        p.triple(inner, p.relation(), outer);
      break;
    }
  }
}

std::vector<Pattern> allocate(const SynthConfig& cfg, std::mt19937_64& rng) {
  // Largest-remainder apportionment, then shuffled.
  std::array<int, kNumPatterns> counts{};
  std::array<double, kNumPatterns> remainder{};
  int assigned = 0;
  for (int p = 0; p < kNumPatterns; ++p) {
    const double exact = cfg.mix[p] * cfg.count;
    counts[p] = static_cast<int>(std::floor(exact));
    remainder[p] = exact - counts[p];
    assigned += counts[p];
  }
  std::array<int, kNumPatterns> by_remainder{0, 1, 2, 3};
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int n = 0; assigned < cfg.count; ++n, ++assigned) ++counts[by_remainder[n % kNumPatterns]];
  std::vector<Pattern> out;
  for (int p = 0; p < kNumPatterns; ++p) out.insert(out.end(), counts[p], static_cast<Pattern>(p));
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

bool only_flag(const PatternLabel& label, Pattern pattern) {
  for (int p = 0; p < kNumPatterns; ++p)
    if (label.flags[p] != (p == static_cast<int>(pattern))) return false;
  return true;
}

}  // namespace

SynthCorpus generate_synthetic(const SynthConfig& config) {
  config.check();
  std::mt19937_64 rng(config.seed);
  SynthCorpus out;
  std::vector<std::string> names;
  for (int k = 0; k < config.num_relations; ++k) names.push_back(fmt::format("rel{}", k));
  out.corpus.relations = RelationVocab(names);

  constexpr int kMaxAttempts = 1000;
  int serial = 0;
  for (const Pattern target : allocate(config, rng)) {
    ++serial;
    std::optional<AnnotatedSentence> built;
    for (int attempt = 0; attempt < kMaxAttempts && !built; ++attempt) {
      Planner plan(rng, config.num_relations);
      plan_pattern(plan, target);
      const int extra = plan.uniform(0, config.max_extra_triples);
      for (int e = 0; e < extra; ++e) plan.triple(plan.entity(), plan.relation(), plan.entity());
      auto s = plan.realise(config, serial);
      if (!s || !only_flag(classify_pattern(*s), target) ||
          !encode(*s, config.num_relations).collision_free())
        continue;
      built = std::move(s);
    }
    if (!built)
      throw UsageError(fmt::format("could not generate a {} sentence within length {}",
                                   pattern_name(target), config.max_length));
    out.corpus.sentences.push_back(std::move(*built));
    out.labels.push_back(target);
  }
  return out;
}

void save_synthetic(const std::filesystem::path& path, const SynthCorpus& synth) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  for (std::size_t n = 0; n < synth.corpus.sentences.size(); ++n) {
    auto rec = nlohmann::json::parse(native_record(synth.corpus.sentences[n], synth.corpus.relations));
    rec["pattern"] = pattern_name(synth.labels.at(n));
    out << rec.dump() << '\n';
  }
  if (!out) throw DataError(fmt::format("write failed for '{}'", path.string()));
}

std::vector<std::optional<Pattern>> read_pattern_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::vector<std::optional<Pattern>> labels;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(fmt::format("{}:{}: malformed record: {}", path.string(), line_no, e.what()));
    }
    std::optional<Pattern> label;
    if (auto it = rec.find("pattern"); it != rec.end() && it->is_string()) {
      label = parse_pattern(it->get<std::string>());
      if (!label)
        throw DataError(fmt::format("{}:{}: unknown pattern '{}'", path.string(), line_no,
                                    it->get<std::string>()));
    }
    labels.push_back(label);
  }
  return labels;
}

}  // namespace onerel
