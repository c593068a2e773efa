#include "bitag/config.hpp"

#include "bitag/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>

namespace bitag {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on")
    return true;
  if (value == "false" || value == "0" || value == "no" || value == "off")
    return false;
  throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

long parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

}  // namespace

std::map<std::string, std::string> parse_flat_config(const std::string& text) {
  std::map<std::string, std::string> entries;
  size_t line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    size_t nl = text.find('\n', start);
    std::string line = text.substr(
        start, nl == std::string::npos ? std::string::npos : nl - start);
    start = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    entries[key] = value;
  }
  return entries;
}

void apply_config_entry(RunConfig& c, const std::string& key,
                        const std::string& value) {
  if (key == "data.match_standard") {
    parse_match_standard(value);  // validates
    c.match_standard = value;
  } else if (key == "data.max_len") {
    c.max_len = static_cast<int>(parse_int(key, value));
  } else if (key == "encoder.hidden_size") {
    c.hidden_size = static_cast<int>(parse_int(key, value));
  } else if (key == "encoder.layers") {
    c.layers = static_cast<int>(parse_int(key, value));
  } else if (key == "encoder.heads") {
    c.heads = static_cast<int>(parse_int(key, value));
  } else if (key == "encoder.ffn_multiplier") {
    c.ffn_multiplier = static_cast<int>(parse_int(key, value));
  } else if (key == "encoder.dropout") {
    c.dropout = parse_double(key, value);
  } else if (key == "train.batch_size") {
    c.train.batch_size = static_cast<int>(parse_int(key, value));
  } else if (key == "train.peak_lr") {
    c.train.peak_lr = parse_double(key, value);
  } else if (key == "train.max_epochs") {
    c.train.max_epochs = static_cast<int>(parse_int(key, value));
  } else if (key == "train.patience") {
    c.train.patience = static_cast<int>(parse_int(key, value));
  } else if (key == "train.seed") {
    c.train.seed = static_cast<uint64_t>(parse_int(key, value));
  } else if (key == "train.teacher_forcing") {
    c.train.teacher_forcing = parse_bool(key, value);
  } else if (key == "train.stop_at_f1") {
    c.train.stop_at_f1 = parse_double(key, value);
  } else if (key == "contrastive.enabled") {
    c.contrastive.enabled = parse_bool(key, value);
  } else if (key == "tau" || key == "contrastive.tau") {
    c.contrastive.tau = parse_double(key, value);
  } else if (key == "beta" || key == "contrastive.beta") {
    c.contrastive.beta = parse_double(key, value);
  } else if (key == "omega1" || key == "contrastive.omega1") {
    c.contrastive.omega1 = parse_double(key, value);
  } else if (key == "omega2" || key == "contrastive.omega2") {
    c.contrastive.omega2 = parse_double(key, value);
  } else if (key == "decode.span_threshold") {
    c.decode.span_threshold = parse_double(key, value);
  } else if (key == "decode.rel_threshold") {
    c.decode.rel_threshold = parse_double(key, value);
  } else if (key == "decode.relation_filter") {
    c.decode.relation_filter = parse_bool(key, value);
  } else if (key == "direction.s2o") {
    c.direction_s2o = parse_bool(key, value);
  } else if (key == "direction.o2s") {
    c.direction_o2s = parse_bool(key, value);
  } else if (key == "relation_prediction.enabled") {
    c.relation_prediction = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  for (const auto& [key, value] : parse_flat_config(text))
    apply_config_entry(config, key, value);
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.max_len < 1) fail("data.max_len must be >= 1");
  if (c.hidden_size < 1) fail("encoder.hidden_size must be >= 1");
  if (c.layers < 0) fail("encoder.layers must be >= 0");
  if (c.heads < 1 || c.hidden_size % c.heads != 0)
    fail("encoder.heads must divide encoder.hidden_size");
  if (c.ffn_multiplier < 1) fail("encoder.ffn_multiplier must be >= 1");
  if (c.dropout < 0.0 || c.dropout >= 1.0)
    fail("encoder.dropout must be in [0, 1)");
  if (c.train.batch_size < 1) fail("train.batch_size must be >= 1");
  if (c.train.peak_lr <= 0.0) fail("train.peak_lr must be positive");
  if (c.train.max_epochs < 1) fail("train.max_epochs must be >= 1");
  if (c.train.patience < 1) fail("train.patience must be >= 1");
  if (c.contrastive.tau <= 0.0) fail("tau must be positive");
  if (c.contrastive.beta <= -1.0 || c.contrastive.beta > 1.0)
    fail("beta must be in (-1, 1]");
  if (c.contrastive.omega1 < 0.0 || c.contrastive.omega2 < 0.0)
    fail("omega1/omega2 must be non-negative");
  if (c.decode.span_threshold <= 0.0 || c.decode.span_threshold >= 1.0)
    fail("decode.span_threshold must be in (0, 1)");
  if (c.decode.rel_threshold <= 0.0 || c.decode.rel_threshold >= 1.0)
    fail("decode.rel_threshold must be in (0, 1)");
  if (!c.direction_s2o && !c.direction_o2s)
    fail("at least one of direction.s2o / direction.o2s must be enabled");
  parse_match_standard(c.match_standard);
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["data"] = {{"match_standard", c.match_standard}, {"max_len", c.max_len}};
  j["encoder"] = {{"hidden_size", c.hidden_size},
                  {"layers", c.layers},
                  {"heads", c.heads},
                  {"ffn_multiplier", c.ffn_multiplier},
                  {"dropout", c.dropout}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"peak_lr", c.train.peak_lr},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"seed", c.train.seed},
                {"teacher_forcing", c.train.teacher_forcing},
                {"stop_at_f1", c.train.stop_at_f1}};
  j["contrastive"] = {{"enabled", c.contrastive.enabled},
                      {"tau", c.contrastive.tau},
                      {"beta", c.contrastive.beta},
                      {"omega1", c.contrastive.omega1},
                      {"omega2", c.contrastive.omega2}};
  j["decode"] = {{"span_threshold", c.decode.span_threshold},
                 {"rel_threshold", c.decode.rel_threshold},
                 {"relation_filter", c.decode.relation_filter}};
  j["direction"] = {{"s2o", c.direction_s2o}, {"o2s", c.direction_o2s}};
  j["relation_prediction"] = {{"enabled", c.relation_prediction}};
  return j.dump();
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  RunConfig c;
  c.match_standard = j["data"]["match_standard"].get<std::string>();
  c.max_len = j["data"]["max_len"].get<int>();
  c.hidden_size = j["encoder"]["hidden_size"].get<int>();
  c.layers = j["encoder"]["layers"].get<int>();
  c.heads = j["encoder"]["heads"].get<int>();
  c.ffn_multiplier = j["encoder"]["ffn_multiplier"].get<int>();
  c.dropout = j["encoder"]["dropout"].get<double>();
  c.train.batch_size = j["train"]["batch_size"].get<int>();
  c.train.peak_lr = j["train"]["peak_lr"].get<double>();
  c.train.max_epochs = j["train"]["max_epochs"].get<int>();
  c.train.patience = j["train"]["patience"].get<int>();
  c.train.seed = j["train"]["seed"].get<uint64_t>();
  c.train.teacher_forcing = j["train"]["teacher_forcing"].get<bool>();
  c.train.stop_at_f1 = j["train"]["stop_at_f1"].get<double>();
  c.contrastive.enabled = j["contrastive"]["enabled"].get<bool>();
  c.contrastive.tau = j["contrastive"]["tau"].get<double>();
  c.contrastive.beta = j["contrastive"]["beta"].get<double>();
  c.contrastive.omega1 = j["contrastive"]["omega1"].get<double>();
  c.contrastive.omega2 = j["contrastive"]["omega2"].get<double>();
  c.decode.span_threshold = j["decode"]["span_threshold"].get<double>();
  c.decode.rel_threshold = j["decode"]["rel_threshold"].get<double>();
  c.decode.relation_filter = j["decode"]["relation_filter"].get<bool>();
  c.direction_s2o = j["direction"]["s2o"].get<bool>();
  c.direction_o2s = j["direction"]["o2s"].get<bool>();
  c.relation_prediction = j["relation_prediction"]["enabled"].get<bool>();
  return c;
}

}  // namespace bitag
