#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "s2v/deblur.hpp"
#include "s2v/mfcc.hpp"
#include "s2v/network.hpp"

namespace s2v::ckpt {

using json = nlohmann::ordered_json;

// Named-tensor archive: 8-byte magic, JSON header, then tensors sorted by
// name with raw little-endian float32 payloads (see docs/formats.md).
void save_archive(const std::filesystem::path& path, const net::ModelParams& tensors,
                  const json& header);
std::pair<net::ModelParams, json> load_archive(const std::filesystem::path& path);

json to_json(const dsp::MfccConfig& cfg);
dsp::MfccConfig mfcc_config_from_json(const json& j);
json to_json(const net::NetConfig& cfg);
net::NetConfig net_config_from_json(const json& j);
json to_json(const dsp::NormStats& stats);
dsp::NormStats norm_stats_from_json(const json& j);
json to_json(const deblur::DeblurConfig& cfg);
deblur::DeblurConfig deblur_config_from_json(const json& j);

// Generator checkpoint: parameters plus everything inference must agree on
// with training (net layout, MFCC settings, feature normalization).
struct GeneratorCheckpoint {
  net::ModelParams params;
  net::NetConfig net_cfg;
  dsp::MfccConfig mfcc_cfg;
  dsp::NormStats norm = dsp::NormStats::identity();
  bool normalize_audio = true;
  json extra;  // free-form metadata (epoch, losses, ...)

  void save(const std::filesystem::path& path) const;
  static GeneratorCheckpoint load(const std::filesystem::path& path);
};

struct DeblurCheckpoint {
  net::ModelParams params;
  deblur::DeblurConfig cfg;
  json extra;

  void save(const std::filesystem::path& path) const;
  static DeblurCheckpoint load(const std::filesystem::path& path);
};

}  // namespace s2v::ckpt
