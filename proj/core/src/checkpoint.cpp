#include "bitag/checkpoint.hpp"

#include "bitag/corpus.hpp"

#include <nlohmann/json.hpp>

#include <map>

namespace bitag {

using nlohmann::json;
using nn::Matrix;

namespace {

constexpr const char* kFormat = "bitag.checkpoint.v1";

json matrix_json(const Matrix& m) {
  json data = json::array();
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  long rows = j["rows"].get<long>();
  long cols = j["cols"].get<long>();
  const json& data = j["data"];
  if (static_cast<long>(data.size()) != rows * cols)
    throw DataError("checkpoint: weight entry count mismatch");
  Matrix m(rows, cols);
  size_t k = 0;
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const RunConfig& config, TinyTransformerEncoder& encoder,
                     TaggerModel& model, const TokenVocab& tokens,
                     const RelationVocab& relations) {
  json j;
  j["format"] = kFormat;
  j["config"] = json::parse(run_config_to_json(config));
  const TransformerConfig& ec = encoder.config();
  j["encoder"] = json{{"vocab_size", ec.vocab_size},
                      {"hidden_size", ec.hidden_size},
                      {"layers", ec.layers},
                      {"heads", ec.heads},
                      {"ffn_multiplier", ec.ffn_multiplier},
                      {"max_len", ec.max_len},
                      {"dropout", ec.dropout}};
  j["tokens"] = tokens.tokens();
  j["relations"] = relations.labels();

  std::vector<nn::Parameter*> params;
  encoder.collect_parameters(params);
  model.collect_parameters(params);
  json weights;
  for (const nn::Parameter* p : params) weights[p->name] = matrix_json(p->value);
  j["params"] = std::move(weights);
  save_text_file(path, j.dump());
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid checkpoint JSON: " + e.what());
  }
  if (j.value("format", "") != kFormat)
    throw DataError(path.string() + ": missing checkpoint format tag");

  LoadedModel loaded;
  loaded.config = run_config_from_json(j["config"].dump());

  std::vector<std::string> token_list =
      j["tokens"].get<std::vector<std::string>>();
  // The stored list already starts with <unk>; rebuild from the tail.
  loaded.tokens = TokenVocab(
      std::vector<std::string>(token_list.begin() + 1, token_list.end()));
  loaded.relations =
      RelationVocab(j["relations"].get<std::vector<std::string>>());

  const json& ej = j["encoder"];
  TransformerConfig ec;
  ec.vocab_size = ej["vocab_size"].get<int>();
  ec.hidden_size = ej["hidden_size"].get<int>();
  ec.layers = ej["layers"].get<int>();
  ec.heads = ej["heads"].get<int>();
  ec.ffn_multiplier = ej["ffn_multiplier"].get<int>();
  ec.max_len = ej["max_len"].get<int>();
  ec.dropout = ej["dropout"].get<double>();
  if (ec.vocab_size != loaded.tokens.size())
    throw DataError("checkpoint: token vocabulary size mismatch");

  loaded.encoder = std::make_unique<TinyTransformerEncoder>(ec, 0);
  loaded.model = std::make_unique<TaggerModel>(
      ec.hidden_size, loaded.relations.size(), 0);

  std::vector<nn::Parameter*> params;
  loaded.encoder->collect_parameters(params);
  loaded.model->collect_parameters(params);
  const json& weights = j["params"];
  for (nn::Parameter* p : params) {
    if (!weights.contains(p->name))
      throw DataError("checkpoint: missing weight tensor " + p->name);
    Matrix m = matrix_from_json(weights[p->name]);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw DataError("checkpoint: shape mismatch for " + p->name);
    p->value = std::move(m);
    p->zero_grad();
  }
  if (weights.size() != params.size())
    throw DataError("checkpoint: unexpected extra weight tensors");
  return loaded;
}

}  // namespace bitag
