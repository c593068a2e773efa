#pragma once

#include "bitag/config.hpp"
#include "bitag/encoder.hpp"
#include "bitag/model.hpp"

#include <filesystem>
#include <memory>

namespace bitag {

// A trained model restored from disk.
struct LoadedModel {
  RunConfig config;
  TokenVocab tokens;
  RelationVocab relations;
  std::unique_ptr<TinyTransformerEncoder> encoder;
  std::unique_ptr<TaggerModel> model;
};

// Single self-describing JSON archive: run config, vocabularies, encoder
// architecture and every named weight tensor.
void save_checkpoint(const std::filesystem::path& path,
                     const RunConfig& config, TinyTransformerEncoder& encoder,
                     TaggerModel& model, const TokenVocab& tokens,
                     const RelationVocab& relations);

LoadedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace bitag
