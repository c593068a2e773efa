#pragma once

#include "bitag/contrastive.hpp"
#include "bitag/decode.hpp"
#include "bitag/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace bitag {

struct TrainConfig {
  int batch_size = 6;
  double peak_lr = 1e-5;  // linear warmup to this over the first quarter of
                          // total steps, constant afterwards
  int max_epochs = 100;
  int patience = 10;  // non-improving validations before stopping
  uint64_t seed = 42;
  bool teacher_forcing = true;
  double stop_at_f1 = 2.0;  // stop once validation F1 reaches this; values
                            // above 1 disable the check
};

// The full run configuration. Serialized into every artifact (prepared
// corpus, checkpoint, logs, predictions, reports) for provenance.
struct RunConfig {
  // data
  std::string match_standard = "partial";
  int max_len = 100;

  // encoder architecture (vocab size is resolved from the training corpus)
  int hidden_size = 64;
  int layers = 2;
  int heads = 4;
  int ffn_multiplier = 4;
  double dropout = 0.1;

  TrainConfig train;
  ContrastiveConfig contrastive;
  DecodeConfig decode;

  // ablation switches
  bool direction_s2o = true;
  bool direction_o2s = true;
  bool relation_prediction = true;

  MatchStandard standard() const { return parse_match_standard(match_standard); }
};

// Flat "dotted.key = value" config files; '#' starts a comment.
std::map<std::string, std::string> parse_flat_config(const std::string& text);
void apply_config_entry(RunConfig& config, const std::string& key,
                        const std::string& value);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

// Throws ConfigError when a field is outside its documented range.
void validate(const RunConfig& config);

std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);

}  // namespace bitag
