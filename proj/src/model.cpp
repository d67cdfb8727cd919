#include "onerel/model.hpp"

#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "onerel/errors.hpp"

namespace onerel {

using nlohmann::json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const json& j, std::string_view name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw DataError(fmt::format("checkpoint array '{}' has inconsistent shape", name));
  Eigen::MatrixXd m(rows, cols);
  std::size_t n = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[n++].get<double>();
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::vector<std::string> vocab(model.vocab.tokens().begin() + 2, model.vocab.tokens().end());
  json doc = {
      {"format", "onerel-checkpoint"},
      {"version", kCheckpointVersion},
      {"config_hash", model.config_hash},
      {"dims",
       {{"dim", model.scorer.dim()},
        {"hidden", model.scorer.hidden()},
        {"num_relations", model.scorer.num_relations()},
        {"vocab_size", model.vocab.size()},
        {"max_positions", model.embeddings.max_positions()}}},
      {"use_positional", model.use_positional},
      {"max_seq_len", model.max_seq_len},
      {"dropout_rate", model.scorer.dropout_rate},
      {"relations", model.relations.names()},
      {"vocab", vocab},
      {"W", matrix_to_json(model.scorer.W)},
      {"b", matrix_to_json(model.scorer.b)},
      {"R", matrix_to_json(model.scorer.R)},
      {"token_embeddings", matrix_to_json(model.embeddings.tokens)},
      {"position_embeddings", matrix_to_json(model.embeddings.positions)},
  };
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw DataError(fmt::format("cannot write checkpoint '{}'", tmp.string()));
    out << doc.dump() << '\n';
    if (!out) throw DataError(fmt::format("write failed for '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open checkpoint '{}'", path.string()));
  try {
    const json doc = json::parse(in);
    if (doc.at("format") != "onerel-checkpoint")
      throw DataError(fmt::format("'{}' is not a checkpoint", path.string()));
    if (doc.at("version").get<int>() != kCheckpointVersion)
      throw DataError(fmt::format("'{}': unsupported checkpoint version {}", path.string(),
                                  doc.at("version").dump()));
    Model m;
    m.config_hash = doc.at("config_hash").get<std::string>();
    m.use_positional = doc.at("use_positional").get<bool>();
    m.max_seq_len = doc.at("max_seq_len").get<int>();
    m.relations = RelationVocab(doc.at("relations").get<std::vector<std::string>>());
    m.vocab = Vocab(doc.at("vocab").get<std::vector<std::string>>());
    m.scorer.W = matrix_from_json(doc.at("W"), "W");
    m.scorer.b = matrix_from_json(doc.at("b"), "b");
    m.scorer.R = matrix_from_json(doc.at("R"), "R");
    m.scorer.dropout_rate = doc.at("dropout_rate").get<double>();
    m.embeddings.tokens = matrix_from_json(doc.at("token_embeddings"), "token_embeddings");
    m.embeddings.positions = matrix_from_json(doc.at("position_embeddings"), "position_embeddings");

    const auto& dims = doc.at("dims");
    m.scorer.check();
    if (m.scorer.dim() != dims.at("dim").get<int>() ||
        m.scorer.hidden() != dims.at("hidden").get<int>() ||
        m.scorer.num_relations() != dims.at("num_relations").get<int>() ||
        m.scorer.num_relations() != m.relations.size() ||
        m.vocab.size() != dims.at("vocab_size").get<int>() ||
        m.embeddings.vocab_size() != m.vocab.size() || m.embeddings.dim() != m.scorer.dim() ||
        (m.embeddings.has_positions() && m.embeddings.positions.cols() != m.scorer.dim()))
      throw DataError(fmt::format("'{}': checkpoint dimensions are inconsistent", path.string()));
    return m;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("'{}': malformed checkpoint: {}", path.string(), e.what()));
  } catch (const UsageError& e) {
    throw DataError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

}  // namespace onerel
