#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "s2v/image.hpp"

namespace s2v::media {

// Mono waveform. Samples are clipped to [-1, 1] on decode.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_seconds() const {
    return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0;
  }
};

struct FrameSequence {
  std::vector<Image> frames;
  double fps = 25.0;

  double duration_seconds() const { return fps > 0 ? frames.size() / fps : 0.0; }
};

// WAV (PCM 16-bit or IEEE float32). Stereo is downmixed by channel averaging.
AudioClip load_audio(const std::filesystem::path& path);
void save_audio_wav16(const AudioClip& clip, const std::filesystem::path& path);

// Band-limited (windowed-sinc) resampling. Output length is
// round(n * target_rate / sample_rate).
AudioClip resample(const AudioClip& clip, int target_rate);

// Image files (PNG/JPEG), 8-bit; delegated to OpenCV imgcodecs.
Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

// Frame I/O. A "video path" is either a directory of numbered PNG frames
// (with an optional meta.json carrying fps and an audio.wav alongside) or a
// container file handled by an external ffmpeg binary when one is installed.
FrameSequence read_frames(const std::filesystem::path& path, double fps_hint = 25.0);
void write_video(const FrameSequence& frames, const std::optional<AudioClip>& audio,
                 const std::filesystem::path& path);

// Duration in seconds as recorded in the written artifact.
double probe_duration(const std::filesystem::path& path);

bool ffmpeg_available();

}  // namespace s2v::media
