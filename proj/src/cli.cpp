#include "onerel/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "onerel/corpus.hpp"
#include "onerel/errors.hpp"
#include "onerel/evalx.hpp"
#include "onerel/model.hpp"
#include "onerel/synth.hpp"
#include "onerel/tagging.hpp"
#include "onerel/trainer.hpp"

namespace onerel {

namespace {

constexpr const char* kLogEnv = "ONEREL_LOG_LEVEL";

// 0 quiet, 1 info (default), 2 debug.
int log_level() {
  const char* v = std::getenv(kLogEnv);
  if (!v || !*v) return 1;
  return std::atoi(v);
}

struct DataOptions {
  std::string data;
  std::string format = "native";
  std::string relations;
  std::string match = "exact";
  int max_len = kDefaultMaxSeqLen;
};

void add_data_options(CLI::App* cmd, DataOptions& o, bool required = true) {
  auto* data = cmd->add_option("--data", o.data, "Dataset path (JSON lines)");
  if (required) data->required();
  cmd->add_option("--format", o.format, "Dataset format")
      ->check(CLI::IsMember({"native", "public"}))
      ->capture_default_str();
  cmd->add_option("--relations", o.relations,
                  "Relation vocabulary file: one name per line or JSON (required for --format public)");
  cmd->add_option("--max-len", o.max_len, "Maximum sequence length; longer sentences are truncated")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_match_option(CLI::App* cmd, std::string& match, const char* help) {
  cmd->add_option("--match", match, help)
      ->check(CLI::IsMember({"partial", "exact"}))
      ->capture_default_str();
}

// Public records resolve entities by their last token under partial match
// (the last-word annotated releases) and by the whole string under exact.
Corpus load_dataset(const DataOptions& o, const std::optional<RelationVocab>& fixed,
                    std::ostream& err) {
  if (!std::filesystem::exists(o.data))
    throw DataError(fmt::format("dataset '{}' does not exist", o.data));
  std::optional<RelationVocab> relations = fixed;
  if (!relations && !o.relations.empty()) relations = RelationVocab::load(o.relations);
  Corpus corpus;
  if (o.format == "public") {
    if (!relations) throw UsageError("--format public requires --relations");
    corpus = load_public(o.data, *relations,
                         o.match == "partial" ? MatchMode::kLastToken : MatchMode::kWholeSpan,
                         o.max_len);
  } else {
    LoadOptions lo;
    lo.max_seq_len = o.max_len;
    lo.relations = relations;
    corpus = load_native(o.data, lo);
  }
  if (log_level() >= 1) {
    for (const auto& w : corpus.warnings) err << "warning: " << w << '\n';
  }
  if (corpus.sentences.empty()) throw DataError(fmt::format("dataset '{}' is empty", o.data));
  return corpus;
}

void log_config(const CLI::App& app, std::ostream& err) {
  if (log_level() < 1) return;
  // Only the selected subcommand; its keys carry the "[name]" section.
  for (const auto* sub : app.get_subcommands())
    err << "# resolved configuration\n[" << sub->get_name() << "]\n" << sub->config_to_str(true, false);
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  DataOptions data;
  TrainConfig config;
  std::string checkpoint = "onerel.ckpt.json";
  std::string log;
  std::string vocab;
  bool no_positional = false;
};

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  auto corpus = load_dataset(o.data, std::nullopt, err);
  TrainConfig cfg = o.config;
  cfg.max_seq_len = o.data.max_len;
  cfg.use_positional = !o.no_positional;
  cfg.checkpoint_path = o.checkpoint;
  cfg.log_path = o.log.empty() ? o.checkpoint + ".log" : o.log;
  if (!o.vocab.empty()) cfg.pretrained_path = o.vocab;
  if (log_level() >= 1) err << fmt::format("root seed {}\n{}\n", cfg.seed, cfg.describe());

  const auto started = std::chrono::steady_clock::now();
  const auto result = train(corpus, cfg, [&](const EpochLog& e, const Model&) {
    if (log_level() >= 1)
      err << fmt::format("epoch {:>4}  loss {:.6f}  {:.2f}s\n", e.epoch, e.mean_loss, e.seconds);
    return true;
  });
  if (result.log.empty()) save_checkpoint(o.checkpoint, result.model);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  out << fmt::format("trained {} epochs on {} sentences in {:.2f}s\ncheckpoint {}\nlog {}\n",
                     result.log.size(), corpus.sentences.size(), seconds, o.checkpoint,
                     cfg.log_path->string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  DataOptions data;
  std::string checkpoint;
  std::string match;  // empty: both modes
  std::string out;
};

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  const auto model = load_checkpoint(o.checkpoint);
  std::optional<RelationVocab> fixed = model.relations;
  if (!o.data.relations.empty()) {
    const auto given = RelationVocab::load(o.data.relations);
    if (!(given == model.relations))
      throw DataError(fmt::format("relation file '{}' does not match checkpoint '{}'",
                                  o.data.relations, o.checkpoint));
  }
  DataOptions data = o.data;
  if (!o.match.empty()) data.match = o.match;
  const auto corpus = load_dataset(data, fixed, err);

  const auto started = std::chrono::steady_clock::now();
  std::vector<TripleSet> predictions;
  predictions.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) {
    auto p = predict(s.sentence, model);
    if (p.warning && log_level() >= 1) err << "warning: " << *p.warning << '\n';
    predictions.push_back(std::move(p.triples));
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  std::vector<EvalMode> modes;
  if (o.match.empty() || o.match == "partial") modes.push_back(EvalMode::kPartial);
  if (o.match.empty() || o.match == "exact") modes.push_back(EvalMode::kExact);
  std::string kv;
  for (auto mode : modes) {
    const auto report = breakdown(corpus.sentences, predictions, mode);
    out << format_report(report) << '\n';
    kv += format_key_values(report);
  }
  out << kv;
  out << fmt::format("# predicted {} sentences in {:.3f}s\n", corpus.sentences.size(), seconds);
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    if (!f) throw DataError(fmt::format("cannot write '{}'", o.out));
    f << kv;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TagOptions {
  std::string input;
  std::string relations;
};

int cmd_tag(const TagOptions& o, std::istream& in, std::ostream& out) {
  std::string record = o.input;
  if (record.empty()) {
    std::string line;
    while (std::getline(in, line))
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        record = line;
        break;
      }
  }
  if (record.empty()) throw DataError("no sentence given (use --input or standard input)");
  std::istringstream stream(record);
  LoadOptions lo;
  lo.max_seq_len = std::numeric_limits<int>::max();
  if (!o.relations.empty()) lo.relations = RelationVocab::load(o.relations);
  auto corpus = parse_native(stream, lo, "<input>");
  if (corpus.sentences.size() != 1) throw DataError("expected exactly one sentence record");
  const auto& s = corpus.sentences.front();
  const int K = corpus.relations.size();

  const auto encoding = encode(s, K);
  out << fmt::format("sentence {} ({} tokens, {} triples)\n", s.sentence.id, s.sentence.length(),
                     s.triples.size());
  std::set<int> used;
  for (const auto& [cell, tag] : encoding.matrix.cells()) used.insert(cell.relation);
  for (int k : used) {
    out << fmt::format("\nrelation {}\n", corpus.relations.name(k));
    out << render_relation(encoding.matrix, k, s.sentence.tokens);
  }

  auto span_text = [&](const Span& sp) {
    std::string text;
    for (int i = sp.begin; i <= sp.end; ++i) text += (i > sp.begin ? " " : "") + s.sentence.tokens[i];
    return fmt::format("[{},{}] \"{}\"", sp.begin, sp.end, text);
  };
  out << "\ncollisions: " << (encoding.collisions.empty() ? "none" : "") << '\n';
  for (const auto& c : encoding.collisions) {
    out << fmt::format("  {} at ({}, {}, {}): kept {}, lost {}\n",
                       c.kind == Collision::Kind::kOverwrite ? "overwrite" : "splice-interference",
                       c.cell.row, corpus.relations.name(c.cell.relation), c.cell.col,
                       tag_name(c.kept), tag_name(c.dropped));
  }
  const auto decoded = decode(encoding.matrix);
  out << fmt::format("decoded triples: {}\n", decoded.size());
  for (const auto& t : decoded)
    out << fmt::format("  {} -{}-> {}\n", span_text(t.head), corpus.relations.name(t.relation),
                       span_text(t.tail));
  const auto rt = roundtrip_check(s, K);
  if (rt.exact) {
    out << (s.triples.empty() ? "roundtrip: exact (empty)\n" : "roundtrip: exact\n");
  } else {
    out << fmt::format("roundtrip: lossy ({} missing, {} spurious)\n", rt.missing.size(),
                       rt.spurious.size());
    for (const auto& t : rt.missing)
      out << fmt::format("  missing  {} -{}-> {}\n", span_text(t.head),
                         corpus.relations.name(t.relation), span_text(t.tail));
    for (const auto& t : rt.spurious)
      out << fmt::format("  spurious {} -{}-> {}\n", span_text(t.head),
                         corpus.relations.name(t.relation), span_text(t.tail));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  SynthConfig config;
  std::vector<double> mix{0.25, 0.25, 0.25, 0.25};
  std::string out;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  SynthConfig cfg = o.config;
  if (o.mix.size() != kNumPatterns)
    throw UsageError("--mix takes four fractions: Normal,EPO,SEO,HTO");
  std::copy(o.mix.begin(), o.mix.end(), cfg.mix.begin());
  const auto synth = generate_synthetic(cfg);
  save_synthetic(o.out, synth);
  std::array<int, kNumPatterns> counts{};
  for (auto p : synth.labels) ++counts[static_cast<int>(p)];
  out << fmt::format("wrote {} sentences to {} (Normal {}, EPO {}, SEO {}, HTO {})\n",
                     synth.labels.size(), o.out, counts[0], counts[1], counts[2], counts[3]);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct StatsOptions {
  DataOptions data;
};

int cmd_stats(const StatsOptions& o, std::ostream& out, std::ostream& err) {
  const auto corpus = load_dataset(o.data, std::nullopt, err);
  const auto st = corpus_stats(corpus.sentences);
  out << fmt::format("{:>9} {:>9} {:>9} | {:>7} {:>7} {:>7} {:>7} | {:>6} {:>6} {:>6} {:>6} {:>6}\n",
                     "sentences", "relations", "triples", "Normal", "SEO", "EPO", "HTO", "N=1",
                     "N=2", "N=3", "N=4", "N>=5");
  out << fmt::format("{:>9} {:>9} {:>9} | {:>7} {:>7} {:>7} {:>7} | {:>6} {:>6} {:>6} {:>6} {:>6}\n",
                     st.sentences, corpus.relations.size(), st.triples,
                     st.patterns[static_cast<int>(Pattern::kNormal)],
                     st.patterns[static_cast<int>(Pattern::kSEO)],
                     st.patterns[static_cast<int>(Pattern::kEPO)],
                     st.patterns[static_cast<int>(Pattern::kHTO)], st.buckets[0], st.buckets[1],
                     st.buckets[2], st.buckets[3], st.buckets[4]);
  if (st.no_triple_sentences > 0)
    out << fmt::format("sentences without triples: {}\n", st.no_triple_sentences);

  if (o.data.format == "native") {
    const auto labels = read_pattern_labels(o.data.data);
    std::array<long, kNumPatterns> recorded{};
    long labelled = 0;
    for (const auto& l : labels)
      if (l) {
        ++recorded[static_cast<int>(*l)];
        ++labelled;
      }
    if (labelled > 0) {
      const bool agrees = labelled == st.sentences && recorded == st.patterns;
      out << fmt::format("generator labels: Normal {} SEO {} EPO {} HTO {} ({})\n",
                         recorded[static_cast<int>(Pattern::kNormal)],
                         recorded[static_cast<int>(Pattern::kSEO)],
                         recorded[static_cast<int>(Pattern::kEPO)],
                         recorded[static_cast<int>(Pattern::kHTO)],
                         agrees ? "consistent" : "MISMATCH");
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExportOptions {
  std::string checkpoint;
  std::string out;
};

int cmd_export(const ExportOptions& o, std::ostream& out) {
  const auto model = load_checkpoint(o.checkpoint);
  export_relation_embeddings(model.scorer, model.relations, o.out);
  out << fmt::format("wrote {} rows of {} values to {}\n", kNumTags * model.relations.size(),
                     model.scorer.hidden(), o.out);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& input, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"onerel: joint entity and relation extraction with relation-specific horns tagging"};
  app.set_config("--config", "", "Config file (TOML/INI); command-line flags override it");
  app.require_subcommand(1);
  app.footer(fmt::format("Log verbosity: {}=0|1|2 (quiet, info, debug). Exit codes: 0 ok, "
                         "1 usage, 2 data, 3 numeric.",
                         kLogEnv));

  TrainOptions train_o;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_data_options(train_cmd, train_o.data);
  add_match_option(train_cmd, train_o.data.match,
                   "Entity resolution for --format public: partial = last token, exact = whole span");
  auto& tc = train_o.config;
  train_cmd->add_option("--checkpoint", train_o.checkpoint, "Checkpoint output path")
      ->capture_default_str();
  train_cmd->add_option("--out", train_o.log, "Per-epoch log path (default: <checkpoint>.log)");
  train_cmd->add_option("--seed", tc.seed, "Root random seed")->capture_default_str();
  train_cmd->add_option("--epochs", tc.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", tc.batch_size, "Sentences per batch")->capture_default_str();
  train_cmd->add_option("--lr", tc.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--dropout", tc.dropout_rate, "Dropout before the rectifier")
      ->capture_default_str();
  train_cmd->add_option("--dim", tc.dim, "Token embedding size d")->capture_default_str();
  train_cmd->add_option("--hidden", tc.hidden, "Pair representation size (0 = 3 * dim)")
      ->capture_default_str();
  train_cmd->add_option("--min-count", tc.min_count, "Minimum token frequency for the vocabulary")
      ->capture_default_str();
  train_cmd->add_flag("--no-positional", train_o.no_positional, "Disable positional embeddings");
  train_cmd->add_option("--vocab", train_o.vocab,
                        "Pretrained embeddings (text: token followed by dim values) to initialise "
                        "matching vocabulary rows");

  EvalOptions eval_o;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_data_options(eval_cmd, eval_o.data);
  eval_cmd->add_option("--checkpoint", eval_o.checkpoint, "Checkpoint path")->required();
  add_match_option(eval_cmd, eval_o.match, "Report only this match mode (default: both)");
  eval_cmd->add_option("--out", eval_o.out, "Also write the key=value report here");

  TagOptions tag_o;
  auto* tag_cmd = app.add_subcommand(
      "tag",
      "Show the horns tag grid of one sentence. Input is one native record, e.g.\n"
      "  {\"tokens\":[...],\"triples\":[{\"head\":[0,2],\"relation\":\"r\",\"tail\":[6,8]}]}\n"
      "Each relation with tags prints a grid: rows are head tokens, columns tail tokens,\n"
      "cells are '-', 'HB-TB', 'HB-TE' or 'HE-TE'. Then the collision report, the decoded\n"
      "triples and the roundtrip verdict.");
  tag_cmd->add_option("--input", tag_o.input, "Native record (default: first line of stdin)");
  tag_cmd->add_option("--relations", tag_o.relations, "Relation vocabulary file");

  SynthOptions synth_o;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic native-format corpus");
  synth_cmd->add_option("--out", synth_o.out, "Output path")->required();
  synth_cmd->add_option("--count", synth_o.config.count, "Number of sentences")->capture_default_str();
  synth_cmd->add_option("--num-relations", synth_o.config.num_relations, "Number of relations")
      ->capture_default_str();
  synth_cmd->add_option("--mix", synth_o.mix, "Fractions Normal,EPO,SEO,HTO")
      ->delimiter(',')
      ->expected(kNumPatterns)
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_o.config.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--min-len", synth_o.config.min_length, "Minimum sentence length")
      ->capture_default_str();
  synth_cmd->add_option("--max-len", synth_o.config.max_length, "Maximum sentence length")
      ->capture_default_str();
  synth_cmd->add_option("--extra-triples", synth_o.config.max_extra_triples,
                        "Maximum unrelated extra triples per sentence")
      ->capture_default_str();

  StatsOptions stats_o;
  auto* stats_cmd = app.add_subcommand("stats", "Overlap-pattern and triple-count statistics");
  add_data_options(stats_cmd, stats_o.data);
  add_match_option(stats_cmd, stats_o.data.match,
                   "Entity resolution for --format public: partial = last token, exact = whole span");

  ExportOptions export_o;
  auto* export_cmd =
      app.add_subcommand("export-relations", "Write the relation representations (columns of R)");
  export_cmd->add_option("--checkpoint", export_o.checkpoint, "Checkpoint path")->required();
  export_cmd->add_option("--out", export_o.out, "Output TSV path")->required();

  std::vector<std::string> argv_store{"onerel"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    log_config(app, err);
    if (*train_cmd) return cmd_train(train_o, out, err);
    if (*eval_cmd) return cmd_eval(eval_o, out, err);
    if (*tag_cmd) return cmd_tag(tag_o, input, out);
    if (*synth_cmd) return cmd_synth(synth_o, out);
    if (*stats_cmd) return cmd_stats(stats_o, out, err);
    if (*export_cmd) return cmd_export(export_o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace onerel
