#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "s2v/face_prep.hpp"
#include "s2v/mfcc.hpp"

namespace s2v::data {

// One supervised triple: the audio window, the identity stack and the
// aligned ground-truth frame at the window's center.
struct TrainingSample {
  dsp::MfccWindow mfcc;  // un-normalized; stats are applied at train time
  Tensor identity;       // (112, 112, 3k), channel-concatenated stills
  Tensor target;         // (112, 112, 3)
  std::string track_id;
  uint32_t frame_index = 0;

  int k() const { return int(identity.dim(2)) / 3; }
};

struct SampleDescriptor {
  std::string file;
  uint64_t offset = 0;
  int k = 1;
  std::string track;
  uint32_t frame = 0;
  std::string split;  // "train" or "val"
};

struct TrackInfo {
  std::string id;
  std::string split;
  double duration_s = 0;
  size_t frames = 0;
  double fps = 25.0;
};

struct Manifest {
  std::vector<TrackInfo> tracks;
  std::vector<SampleDescriptor> samples;
};

struct ManifestStats {
  double hours = 0;
  size_t samples = 0;
};

// JSON-lines manifest: one record per line, "track" and "sample" types.
void save_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

// hours = sum of track durations / 3600; samples = descriptor count.
ManifestStats manifest_stats(const Manifest& m);
ManifestStats manifest_stats(const Manifest& m, const std::string& split);

struct BuildConfig {
  int frame_stride = 5;      // keep every 5th frame as a target
  int min_gap_frames = 25;   // identity stills at least this far from the target
  int k = 1;                 // stills per identity stack
  uint64_t seed = 0;
  dsp::MfccConfig mfcc;
};

// A face track whose frames are already registered to the canonical frame
// and whose audio is synchronized with frame 0.
struct AlignedTrack {
  std::string id;
  media::FrameSequence frames;  // 112x112x3 each
  media::AudioClip audio;       // at the MfccConfig rate
};

// Target frames are taken every frame_stride frames; identity stills are
// drawn uniformly (without replacement) from indices at distance
// >= min_gap_frames. Tracks too short to satisfy the gap yield no samples.
std::vector<TrainingSample> build_samples(const AlignedTrack& track, const BuildConfig& cfg);

// Packed sample files (see docs/formats.md): fixed-size records of raw
// little-endian float32 payloads addressed by byte offset.
std::vector<uint64_t> write_samples(const std::vector<TrainingSample>& samples,
                                    const std::filesystem::path& path);
TrainingSample read_sample(const std::filesystem::path& path, uint64_t offset);
dsp::MfccWindow read_sample_window(const std::filesystem::path& path, uint64_t offset);

// Random-access view over training data, shared by the trainer and tests.
class SampleSource {
public:
  virtual ~SampleSource() = default;
  virtual size_t size() const = 0;
  virtual TrainingSample get(size_t i) const = 0;
};

class MemorySource : public SampleSource {
public:
  explicit MemorySource(std::vector<TrainingSample> samples) : samples_(std::move(samples)) {}
  size_t size() const override { return samples_.size(); }
  TrainingSample get(size_t i) const override { return samples_.at(i); }

private:
  std::vector<TrainingSample> samples_;
};

// Reads descriptors of one split from a manifest; file paths resolve
// relative to the manifest's directory.
class PackedSource : public SampleSource {
public:
  PackedSource(const std::filesystem::path& manifest_path, const std::string& split);
  size_t size() const override { return descriptors_.size(); }
  TrainingSample get(size_t i) const override;
  const std::vector<SampleDescriptor>& descriptors() const { return descriptors_; }
  dsp::MfccWindow get_window(size_t i) const;

private:
  std::filesystem::path base_;
  std::vector<SampleDescriptor> descriptors_;
};

Tensor stack_identity_images(const std::vector<Image>& images);

}  // namespace s2v::data
