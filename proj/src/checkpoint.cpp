#include "s2v/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fs = std::filesystem;

namespace s2v::ckpt {

namespace {

constexpr char kMagic[8] = {'S', '2', 'V', 'A', 'R', 'C', 'H', '1'};

template <class T>
void write_le(std::ostream& out, T v) {
  // host is little-endian on every supported target
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_archive(const fs::path& path, const net::ModelParams& tensors, const json& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write archive: " + path.string());
  out.write(kMagic, 8);
  const std::string hdr = header.dump();
  write_le<uint64_t>(out, hdr.size());
  out.write(hdr.data(), std::streamsize(hdr.size()));
  write_le<uint32_t>(out, uint32_t(tensors.size()));
  for (const auto& [name, t] : tensors) {  // std::map: sorted, deterministic bytes
    write_le<uint16_t>(out, uint16_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_le<uint8_t>(out, uint8_t(t.rank()));
    for (int64_t d : t.shape()) write_le<uint32_t>(out, uint32_t(d));
    write_le<uint64_t>(out, uint64_t(t.numel()) * 4);
    out.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 4));
  }
  if (!out) throw IoError("short write while saving " + path.string());
}

std::pair<net::ModelParams, json> load_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("not a tensor archive: " + path.string());
  const auto hdr_len = read_le<uint64_t>(in);
  std::string hdr(hdr_len, '\0');
  in.read(hdr.data(), std::streamsize(hdr_len));
  json header = json::parse(hdr, nullptr, false);
  if (header.is_discarded()) throw FormatError("corrupt archive header: " + path.string());
  const auto count = read_le<uint32_t>(in);
  net::ModelParams tensors;
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_le<uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = read_le<uint8_t>(in);
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) d = read_le<uint32_t>(in);
    const auto bytes = read_le<uint64_t>(in);
    Tensor t(shape);
    if (uint64_t(t.numel()) * 4 != bytes)
      throw FormatError("tensor size mismatch for '" + name + "' in " + path.string());
    in.read(reinterpret_cast<char*>(t.data()), std::streamsize(bytes));
    if (!in) throw FormatError("truncated archive: " + path.string());
    tensors.emplace(std::move(name), std::move(t));
  }
  return {std::move(tensors), std::move(header)};
}

json to_json(const dsp::MfccConfig& c) {
  return json{{"sample_rate", c.sample_rate}, {"window_ms", c.window_ms},
              {"hop_ms", c.hop_ms},           {"n_fft", c.n_fft},
              {"n_mels", c.n_mels},           {"mel_low_hz", c.mel_low_hz},
              {"mel_high_hz", c.mel_high_hz}, {"n_coeffs", c.n_coeffs},
              {"log_floor", c.log_floor}};
}

dsp::MfccConfig mfcc_config_from_json(const json& j) {
  dsp::MfccConfig c;
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.window_ms = j.value("window_ms", c.window_ms);
  c.hop_ms = j.value("hop_ms", c.hop_ms);
  c.n_fft = j.value("n_fft", c.n_fft);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.mel_low_hz = j.value("mel_low_hz", c.mel_low_hz);
  c.mel_high_hz = j.value("mel_high_hz", c.mel_high_hz);
  c.n_coeffs = j.value("n_coeffs", c.n_coeffs);
  c.log_floor = j.value("log_floor", c.log_floor);
  return c;
}

json to_json(const net::NetConfig& c) {
  return json{{"k_identity", c.k_identity},
              {"skips_enabled", c.skips_enabled},
              {"channel_multiplier", c.channel_multiplier},
              {"embedding_dim", c.embedding_dim}};
}

net::NetConfig net_config_from_json(const json& j) {
  net::NetConfig c;
  c.k_identity = j.value("k_identity", c.k_identity);
  c.skips_enabled = j.value("skips_enabled", c.skips_enabled);
  c.channel_multiplier = j.value("channel_multiplier", c.channel_multiplier);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  return c;
}

json to_json(const dsp::NormStats& s) {
  return json{{"mean", s.mean}, {"std", s.std}};
}

dsp::NormStats norm_stats_from_json(const json& j) {
  dsp::NormStats s = dsp::NormStats::identity();
  if (j.contains("mean"))
    for (size_t i = 0; i < s.mean.size(); ++i) s.mean[i] = j["mean"].at(i).get<double>();
  if (j.contains("std"))
    for (size_t i = 0; i < s.std.size(); ++i) s.std[i] = j["std"].at(i).get<double>();
  return s;
}

json to_json(const deblur::DeblurConfig& c) {
  return json{{"hidden_channels", c.hidden_channels},
              {"conv_layers", deblur::DeblurConfig::kConvLayers}};
}

deblur::DeblurConfig deblur_config_from_json(const json& j) {
  deblur::DeblurConfig c;
  c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
  return c;
}

void GeneratorCheckpoint::save(const fs::path& path) const {
  json header;
  header["type"] = "speech2vid_checkpoint";
  header["format_version"] = 1;
  header["net"] = to_json(net_cfg);
  header["mfcc"] = to_json(mfcc_cfg);
  header["norm"] = to_json(norm);
  header["normalize_audio"] = normalize_audio;
  if (!extra.is_null()) header["extra"] = extra;
  save_archive(path, params, header);
}

GeneratorCheckpoint GeneratorCheckpoint::load(const fs::path& path) {
  auto [tensors, header] = load_archive(path);
  if (header.value("type", "") != "speech2vid_checkpoint")
    throw FormatError("not a generator checkpoint: " + path.string());
  GeneratorCheckpoint c;
  c.params = std::move(tensors);
  c.net_cfg = net_config_from_json(header.at("net"));
  c.mfcc_cfg = mfcc_config_from_json(header.at("mfcc"));
  c.norm = norm_stats_from_json(header.at("norm"));
  c.normalize_audio = header.value("normalize_audio", true);
  if (header.contains("extra")) c.extra = header["extra"];
  return c;
}

void DeblurCheckpoint::save(const fs::path& path) const {
  json header;
  header["type"] = "deblur_checkpoint";
  header["format_version"] = 1;
  header["deblur"] = to_json(cfg);
  if (!extra.is_null()) header["extra"] = extra;
  save_archive(path, params, header);
}

DeblurCheckpoint DeblurCheckpoint::load(const fs::path& path) {
  auto [tensors, header] = load_archive(path);
  if (header.value("type", "") != "deblur_checkpoint")
    throw FormatError("not a deblur checkpoint: " + path.string());
  DeblurCheckpoint c;
  c.params = std::move(tensors);
  c.cfg = deblur_config_from_json(header.at("deblur"));
  if (header.contains("extra")) c.extra = header["extra"];
  return c;
}

}  // namespace s2v::ckpt
