#include "s2v/dataset.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace s2v::data {

namespace {

constexpr char kFileMagic[8] = {'S', '2', 'V', 'S', 'M', 'P', '0', '1'};
constexpr int kImg = face::kCanonicalSize;

size_t record_bytes(int k) {
  return 8 /* frame_index + k */ +
         4 * (size_t(dsp::kWindowCoeffs) * dsp::kWindowSteps + size_t(kImg) * kImg * 3 * k +
              size_t(kImg) * kImg * 3);
}

}  // namespace

void save_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  for (const auto& t : m.tracks) {
    json j{{"type", "track"},          {"id", t.id},       {"split", t.split},
           {"duration_s", t.duration_s}, {"frames", t.frames}, {"fps", t.fps}};
    out << j.dump() << "\n";
  }
  for (const auto& s : m.samples) {
    json j{{"type", "sample"}, {"file", s.file}, {"offset", s.offset}, {"k", s.k},
           {"track", s.track}, {"frame", s.frame}, {"split", s.split}};
    out << j.dump() << "\n";
  }
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  Manifest m;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw FormatError("bad manifest line " + std::to_string(lineno) + " in " + path.string());
    const std::string type = j.value("type", "");
    if (type == "track") {
      TrackInfo t;
      t.id = j.at("id").get<std::string>();
      t.split = j.value("split", "train");
      t.duration_s = j.at("duration_s").get<double>();
      t.frames = j.value("frames", size_t(0));
      t.fps = j.value("fps", 25.0);
      m.tracks.push_back(std::move(t));
    } else if (type == "sample") {
      SampleDescriptor s;
      s.file = j.at("file").get<std::string>();
      s.offset = j.at("offset").get<uint64_t>();
      s.k = j.value("k", 1);
      s.track = j.value("track", "");
      s.frame = j.value("frame", uint32_t(0));
      s.split = j.value("split", "train");
      m.samples.push_back(std::move(s));
    } else {
      throw FormatError("unknown manifest record type '" + type + "' at line " +
                        std::to_string(lineno));
    }
  }
  return m;
}

ManifestStats manifest_stats(const Manifest& m) {
  ManifestStats s;
  for (const auto& t : m.tracks) s.hours += t.duration_s / 3600.0;
  s.samples = m.samples.size();
  return s;
}

ManifestStats manifest_stats(const Manifest& m, const std::string& split) {
  ManifestStats s;
  for (const auto& t : m.tracks)
    if (t.split == split) s.hours += t.duration_s / 3600.0;
  for (const auto& d : m.samples)
    if (d.split == split) ++s.samples;
  return s;
}

Tensor stack_identity_images(const std::vector<Image>& images) {
  if (images.empty()) throw DataError("identity stack needs at least one image");
  const int h = images[0].height(), w = images[0].width();
  const int k = int(images.size());
  Tensor t({h, w, 3 * k});
  for (int g = 0; g < k; ++g) {
    const Image& im = images[size_t(g)];
    if (im.height() != h || im.width() != w || im.channels() != 3)
      throw DataError("identity images must all be HxWx3 with matching sizes");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          t[(int64_t(y) * w + x) * 3 * k + g * 3 + c] = im.at(y, x, c);
  }
  return t;
}

std::vector<TrainingSample> build_samples(const AlignedTrack& track, const BuildConfig& cfg) {
  std::vector<TrainingSample> out;
  const auto n_frames = int64_t(track.frames.frames.size());
  if (n_frames == 0) return out;
  if (track.frames.fps <= 0) throw DataError("build_samples: track fps must be positive");
  if (cfg.k < 1) throw DataError("build_samples: k must be >= 1");

  const double audio_dur = track.audio.duration_seconds();
  dsp::MfccSequence seq;
  bool have_seq = false;
  if (int(track.audio.samples.size()) >= cfg.mfcc.window_samples()) {
    seq = dsp::compute_mfcc(track.audio, cfg.mfcc);
    have_seq = true;
  }
  if (!have_seq) return out;

  Rng rng(derive_seed(cfg.seed, track.id));
  for (int64_t i = 0; i < n_frames; i += cfg.frame_stride) {
    const double center = (double(i) + 0.5) / track.frames.fps;
    if (center > audio_dur) break;

    // identity candidates at temporal distance >= min_gap (either direction)
    std::vector<int64_t> candidates;
    for (int64_t j = 0; j < n_frames; ++j)
      if (std::llabs(j - i) >= cfg.min_gap_frames) candidates.push_back(j);
    if (int64_t(candidates.size()) < cfg.k) continue;

    std::vector<Image> stills;
    for (int g = 0; g < cfg.k; ++g) {  // partial Fisher-Yates, without replacement
      const auto pick = size_t(g) + size_t(rng.uniform_index(candidates.size() - size_t(g)));
      std::swap(candidates[size_t(g)], candidates[pick]);
      stills.push_back(track.frames.frames[size_t(candidates[size_t(g)])]);
    }

    TrainingSample s;
    s.mfcc = dsp::window_mfcc(seq, center);
    s.identity = stack_identity_images(stills);
    s.target = track.frames.frames[size_t(i)].to_tensor();
    s.track_id = track.id;
    s.frame_index = uint32_t(i);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<uint64_t> write_samples(const std::vector<TrainingSample>& samples,
                                    const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write sample file: " + path.string());
  out.write(kFileMagic, 8);
  std::vector<uint64_t> offsets;
  offsets.reserve(samples.size());
  uint64_t pos = 8;
  for (const auto& s : samples) {
    offsets.push_back(pos);
    const uint32_t k = uint32_t(s.k());
    const uint32_t frame = s.frame_index;
    out.write(reinterpret_cast<const char*>(&frame), 4);
    out.write(reinterpret_cast<const char*>(&k), 4);
    std::vector<float> mfcc32(s.mfcc.m.size());
    for (size_t i = 0; i < mfcc32.size(); ++i) mfcc32[i] = float(s.mfcc.m[i]);
    out.write(reinterpret_cast<const char*>(mfcc32.data()),
              std::streamsize(mfcc32.size() * 4));
    out.write(reinterpret_cast<const char*>(s.identity.data()),
              std::streamsize(s.identity.numel() * 4));
    out.write(reinterpret_cast<const char*>(s.target.data()),
              std::streamsize(s.target.numel() * 4));
    pos += record_bytes(int(k));
  }
  if (!out) throw IoError("short write on sample file: " + path.string());
  return offsets;
}

namespace {

void open_and_seek(std::ifstream& in, const fs::path& path, uint64_t offset) {
  in.open(path, std::ios::binary);
  if (!in) throw IoError("cannot open sample file: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kFileMagic, 8) != 0)
    throw FormatError("not a packed sample file: " + path.string());
  in.seekg(std::streamoff(offset));
  if (!in) throw FormatError("bad sample offset in " + path.string());
}

}  // namespace

TrainingSample read_sample(const fs::path& path, uint64_t offset) {
  std::ifstream in;
  open_and_seek(in, path, offset);
  uint32_t frame = 0, k = 0;
  in.read(reinterpret_cast<char*>(&frame), 4);
  in.read(reinterpret_cast<char*>(&k), 4);
  if (!in || k < 1 || k > 16) throw FormatError("corrupt sample record in " + path.string());
  TrainingSample s;
  s.frame_index = frame;
  std::vector<float> mfcc32(s.mfcc.m.size());
  in.read(reinterpret_cast<char*>(mfcc32.data()), std::streamsize(mfcc32.size() * 4));
  for (size_t i = 0; i < mfcc32.size(); ++i) s.mfcc.m[i] = mfcc32[i];
  s.identity = Tensor({kImg, kImg, 3 * int(k)});
  in.read(reinterpret_cast<char*>(s.identity.data()), std::streamsize(s.identity.numel() * 4));
  s.target = Tensor({kImg, kImg, 3});
  in.read(reinterpret_cast<char*>(s.target.data()), std::streamsize(s.target.numel() * 4));
  if (!in) throw FormatError("truncated sample record in " + path.string());
  return s;
}

dsp::MfccWindow read_sample_window(const fs::path& path, uint64_t offset) {
  std::ifstream in;
  open_and_seek(in, path, offset);
  uint32_t frame = 0, k = 0;
  in.read(reinterpret_cast<char*>(&frame), 4);
  in.read(reinterpret_cast<char*>(&k), 4);
  dsp::MfccWindow w;
  std::vector<float> mfcc32(w.m.size());
  in.read(reinterpret_cast<char*>(mfcc32.data()), std::streamsize(mfcc32.size() * 4));
  if (!in) throw FormatError("truncated sample record in " + path.string());
  for (size_t i = 0; i < mfcc32.size(); ++i) w.m[i] = mfcc32[i];
  return w;
}

PackedSource::PackedSource(const fs::path& manifest_path, const std::string& split)
    : base_(manifest_path.parent_path()) {
  const Manifest m = load_manifest(manifest_path);
  for (const auto& d : m.samples)
    if (d.split == split) descriptors_.push_back(d);
}

TrainingSample PackedSource::get(size_t i) const {
  const auto& d = descriptors_.at(i);
  TrainingSample s = read_sample(base_ / d.file, d.offset);
  s.track_id = d.track;
  return s;
}

dsp::MfccWindow PackedSource::get_window(size_t i) const {
  const auto& d = descriptors_.at(i);
  return read_sample_window(base_ / d.file, d.offset);
}

}  // namespace s2v::data
