#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "s2v/media_io.hpp"
#include "support/toy.hpp"

using namespace s2v;
using namespace s2v::media;
namespace fs = std::filesystem;

namespace {

// Raw WAV writer local to the tests so decode paths are exercised against
// independently produced bytes (PCM16, arbitrary channel count).
void write_wav_pcm16(const fs::path& path, const std::vector<std::vector<int16_t>>& channels,
                     uint32_t rate) {
  std::ofstream out(path, std::ios::binary);
  const auto ch = uint16_t(channels.size());
  const auto frames = uint32_t(channels[0].size());
  const uint32_t data_size = frames * ch * 2;
  auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
  auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(ch);
  u32(rate);
  u32(rate * ch * 2);
  u16(uint16_t(ch * 2));
  u16(16);
  out.write("data", 4);
  u32(data_size);
  for (uint32_t f = 0; f < frames; ++f)
    for (uint16_t c = 0; c < ch; ++c) {
      const int16_t s = channels[c][f];
      out.write(reinterpret_cast<const char*>(&s), 2);
    }
}

Image u8_quantized(const Image& img) {
  Image out = img;
  for (auto& v : out.vec()) v = from_u8(to_u8(v));
  return out;
}

// naive DFT magnitude peak over [lo, hi) Hz with 1 Hz steps
double dominant_frequency(const AudioClip& clip, double lo, double hi) {
  double best_mag = -1, best_f = 0;
  for (double f = lo; f < hi; f += 1.0) {
    double re = 0, im = 0;
    for (size_t n = 0; n < clip.samples.size(); ++n) {
      const double ang = 2.0 * M_PI * f * double(n) / clip.sample_rate;
      re += clip.samples[n] * std::cos(ang);
      im += clip.samples[n] * std::sin(ang);
    }
    const double mag = re * re + im * im;
    if (mag > best_mag) {
      best_mag = mag;
      best_f = f;
    }
  }
  return best_f;
}

}  // namespace

TEST_CASE("mono PCM16 decodes with the exact sample count") {
  toy::TempDir tmp("wav_mono");
  std::vector<int16_t> mono(16000);
  for (size_t i = 0; i < mono.size(); ++i)
    mono[i] = int16_t(12000.0 * std::sin(2.0 * M_PI * 440.0 * double(i) / 16000.0));
  write_wav_pcm16(tmp.path / "a.wav", {mono}, 16000);
  const auto clip = load_audio(tmp.path / "a.wav");
  CHECK(clip.samples.size() == 16000);
  CHECK(clip.sample_rate == 16000);
  CHECK(clip.duration_seconds() == doctest::Approx(1.0));
  for (double v : clip.samples) {
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }
}

TEST_CASE("stereo with identical channels downmixes to the same signal") {
  toy::TempDir tmp("wav_stereo");
  std::vector<int16_t> ch(8000);
  for (size_t i = 0; i < ch.size(); ++i)
    ch[i] = int16_t(9000.0 * std::sin(2.0 * M_PI * 220.0 * double(i) / 8000.0));
  write_wav_pcm16(tmp.path / "s.wav", {ch, ch}, 8000);
  write_wav_pcm16(tmp.path / "m.wav", {ch}, 8000);
  const auto stereo = load_audio(tmp.path / "s.wav");
  const auto mono = load_audio(tmp.path / "m.wav");
  REQUIRE(stereo.samples.size() == mono.samples.size());
  for (size_t i = 0; i < mono.samples.size(); ++i)
    CHECK(stereo.samples[i] == doctest::Approx(mono.samples[i]).epsilon(1e-12));
}

TEST_CASE("full-scale square wave lands within 1e-4 of +-1") {
  toy::TempDir tmp("wav_square");
  std::vector<int16_t> sq(1000);
  for (size_t i = 0; i < sq.size(); ++i) sq[i] = (i / 10) % 2 ? int16_t(32767) : int16_t(-32768);
  write_wav_pcm16(tmp.path / "q.wav", {sq}, 16000);
  const auto clip = load_audio(tmp.path / "q.wav");
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    const double expect = (i / 10) % 2 ? 32767.0 / 32768.0 : -1.0;
    CHECK(clip.samples[i] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(std::abs(clip.samples[i]) - 1.0) < 1e-4);
  }
}

TEST_CASE("audio error taxonomy: missing file vs bad encoding") {
  toy::TempDir tmp("wav_err");
  CHECK_THROWS_AS(load_audio(tmp.path / "missing.wav"), IoError);
  std::ofstream(tmp.path / "junk.wav") << "this is not a wav";
  CHECK_THROWS_AS(load_audio(tmp.path / "junk.wav"), FormatError);
}

TEST_CASE("wav16 writer round-trips through the loader") {
  toy::TempDir tmp("wav_rt");
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.resize(4000);
  for (size_t i = 0; i < clip.samples.size(); ++i)
    clip.samples[i] = 0.7 * std::sin(2.0 * M_PI * 350.0 * double(i) / 16000.0);
  save_audio_wav16(clip, tmp.path / "rt.wav");
  const auto back = load_audio(tmp.path / "rt.wav");
  REQUIRE(back.samples.size() == clip.samples.size());
  for (size_t i = 0; i < back.samples.size(); i += 37)
    CHECK(back.samples[i] == doctest::Approx(clip.samples[i]).epsilon(2e-4));
}

TEST_CASE("resample: identity, exact counts and spectral preservation") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.resize(16000);
  for (size_t i = 0; i < clip.samples.size(); ++i)
    clip.samples[i] = 0.5 * std::sin(2.0 * M_PI * 440.0 * double(i) / 16000.0);

  SUBCASE("same rate returns the clip unchanged") {
    const auto out = resample(clip, 16000);
    CHECK(out.samples == clip.samples);
  }
  SUBCASE("8000 samples at 8 kHz become 16000 at 16 kHz") {
    AudioClip c8;
    c8.sample_rate = 8000;
    c8.samples.assign(8000, 0.1);
    CHECK(resample(c8, 16000).samples.size() == 16000);
  }
  SUBCASE("440 Hz sine keeps its FFT peak after 16k->8k") {
    const auto down = resample(clip, 8000);
    CHECK(down.samples.size() == 8000);
    const double peak = dominant_frequency(down, 100.0, 1500.0);
    CHECK(peak == doctest::Approx(440.0).epsilon(0.01));
  }
  SUBCASE("invalid target rate") { CHECK_THROWS_AS(resample(clip, 0), DataError); }
}

TEST_CASE("resample round trip changes length by at most one sample") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    AudioClip clip;
    clip.sample_rate = 8000 + int(rng.uniform_index(40000));
    clip.samples.resize(1000 + rng.uniform_index(9000));
    for (auto& v : clip.samples) v = rng.uniform(-0.5, 0.5);
    const int other = 8000 + int(rng.uniform_index(40000));
    const auto there = resample(clip, other);
    const auto back = resample(there, clip.sample_rate);
    CHECK(std::llabs(int64_t(back.samples.size()) - int64_t(clip.samples.size())) <= 1);
  }
}

TEST_CASE("lossless frame-directory round trip is bit-exact") {
  toy::TempDir tmp("frames_rt");
  FrameSequence seq;
  seq.fps = 25.0;
  Rng rng(3);
  for (int f = 0; f < 10; ++f) {
    Image img(24, 32, 3);
    for (auto& v : img.vec()) v = from_u8(uint8_t(rng.uniform_index(256)));
    seq.frames.push_back(img);
  }
  write_video(seq, std::nullopt, tmp.path / "vid");
  const auto back = read_frames(tmp.path / "vid");
  REQUIRE(back.frames.size() == 10);
  CHECK(back.fps == doctest::Approx(25.0));
  for (int f = 0; f < 10; ++f) CHECK(back.frames[size_t(f)].vec() == seq.frames[size_t(f)].vec());
}

TEST_CASE("container duration matches audio within one frame period") {
  toy::TempDir tmp("frames_dur");
  FrameSequence seq;
  seq.fps = 25.0;
  for (int f = 0; f < 50; ++f) seq.frames.push_back(Image(16, 16, 3));
  AudioClip audio;
  audio.sample_rate = 16000;
  audio.samples.assign(32000, 0.0);  // 2 s
  write_video(seq, audio, tmp.path / "vid");
  const double dur = probe_duration(tmp.path / "vid");
  CHECK(std::abs(dur - 2.0) <= 1.0 / seq.fps);
  // the embedded audio really is 2 s
  const auto back = load_audio(tmp.path / "vid" / "audio.wav");
  CHECK(back.duration_seconds() == doctest::Approx(2.0));
}

TEST_CASE("reading a bare directory of numbered PNGs honors the fps flag") {
  toy::TempDir tmp("frames_bare");
  for (int f = 0; f < 7; ++f) {
    Image img = u8_quantized(toy::make_face({}, f / 6.0));
    char name[32];
    std::snprintf(name, sizeof(name), "img_%03d.png", f);
    save_image(img, tmp.path / name);
  }
  const auto seq = read_frames(tmp.path, 25.0);
  CHECK(seq.frames.size() == 7);
  CHECK(seq.fps == doctest::Approx(25.0));
}

TEST_CASE("write_video rejects empty input; mp4 needs the external encoder") {
  toy::TempDir tmp("vid_err");
  FrameSequence empty;
  CHECK_THROWS_AS(write_video(empty, std::nullopt, tmp.path / "x"), DataError);
  if (!ffmpeg_available()) {
    FrameSequence seq;
    seq.frames.push_back(Image(8, 8, 3));
    CHECK_THROWS_AS(write_video(seq, std::nullopt, tmp.path / "x.mp4"), IoError);
  }
}
