#include "s2v/media_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace s2v::media {

namespace {

uint32_t read_u32(std::istream& in) {
  uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint16_t read_u16(std::istream& in) {
  uint8_t b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

void write_u32(std::ostream& out, uint32_t v) {
  uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
  out.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

AudioClip load_audio(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open audio file: " + path.string());

  char riff[4], wave[4];
  in.read(riff, 4);
  read_u32(in);  // chunk size
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file: " + path.string());

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<char> payload;
  bool got_fmt = false, got_data = false;

  while (in) {
    char id[4];
    in.read(id, 4);
    if (!in) break;
    uint32_t size = read_u32(in);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      in.ignore(size > 16 ? size - 16 : 0);
      got_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      payload.resize(size);
      in.read(payload.data(), size);
      got_data = true;
    } else {
      in.ignore(size + (size & 1));
    }
  }
  if (!got_fmt || !got_data) throw FormatError("WAV missing fmt/data chunk: " + path.string());
  if (channels < 1 || channels > 2)
    throw FormatError("unsupported channel count " + std::to_string(channels));
  if (rate == 0) throw FormatError("invalid sample rate");

  const bool pcm16 = (format == 1 && bits == 16);
  const bool f32 = (format == 3 && bits == 32);
  if (!pcm16 && !f32)
    throw FormatError("unsupported WAV encoding (need PCM16 or float32), format=" +
                      std::to_string(format) + " bits=" + std::to_string(bits));

  const size_t bytes_per = bits / 8;
  const size_t n_frames = payload.size() / (bytes_per * channels);

  AudioClip clip;
  clip.sample_rate = int(rate);
  clip.samples.resize(n_frames);
  const char* p = payload.data();
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0;
    for (int ch = 0; ch < channels; ++ch) {
      if (pcm16) {
        int16_t s;
        std::memcpy(&s, p + (i * channels + ch) * 2, 2);
        acc += double(s) / 32768.0;
      } else {
        float s;
        std::memcpy(&s, p + (i * channels + ch) * 4, 4);
        acc += double(s);
      }
    }
    clip.samples[i] = std::clamp(acc / channels, -1.0, 1.0);
  }
  return clip;
}

void save_audio_wav16(const AudioClip& clip, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write audio file: " + path.string());
  const uint32_t data_size = uint32_t(clip.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, uint32_t(clip.sample_rate));
  write_u32(out, uint32_t(clip.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_size);
  for (double v : clip.samples) {
    const double scaled = std::clamp(v, -1.0, 1.0) * 32767.0;
    auto s = int16_t(std::lround(scaled));
    char b[2] = {char(uint16_t(s) & 0xFF), char(uint16_t(s) >> 8)};
    out.write(b, 2);
  }
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw DataError("resample: target rate must be positive");
  if (clip.sample_rate <= 0) throw DataError("resample: clip has no sample rate");
  if (target_rate == clip.sample_rate) return clip;

  const double ratio = double(target_rate) / clip.sample_rate;
  const auto n_out = size_t(std::llround(double(clip.samples.size()) * ratio));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);

  // Hann-windowed sinc; cutoff at the lower of the two Nyquist rates.
  const double cutoff = std::min(1.0, ratio);
  const int half_taps = int(std::ceil(32.0 / cutoff));
  const auto n_in = int64_t(clip.samples.size());

  for (size_t n = 0; n < n_out; ++n) {
    const double t = double(n) / ratio;  // position in input samples
    const auto k0 = int64_t(std::floor(t)) - half_taps + 1;
    const auto k1 = int64_t(std::floor(t)) + half_taps;
    double acc = 0;
    for (int64_t k = std::max<int64_t>(0, k0); k <= std::min(n_in - 1, k1); ++k) {
      const double x = t - double(k);
      double w;
      if (std::abs(x) < 1e-12) {
        w = cutoff;
      } else {
        const double px = M_PI * x;
        w = cutoff * std::sin(cutoff * px) / (cutoff * px);
      }
      const double hann = 0.5 + 0.5 * std::cos(M_PI * x / half_taps);
      acc += clip.samples[size_t(k)] * w * hann;
    }
    out.samples[n] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

Image load_image(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("cannot read image: " + path.string());
  Image img(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV is BGR
      img.at(y, x, 0) = from_u8(row[x][2]);
      img.at(y, x, 1) = from_u8(row[x][1]);
      img.at(y, x, 2) = from_u8(row[x][0]);
    }
  }
  return img;
}

void save_image(const Image& img, const fs::path& path) {
  if (img.empty()) throw DataError("save_image: empty image");
  cv::Mat m(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x) {
      const int c = img.channels();
      const float r = img.at(y, x, 0);
      const float g = c > 1 ? img.at(y, x, 1) : r;
      const float b = c > 2 ? img.at(y, x, 2) : r;
      row[x] = cv::Vec3b(to_u8(b), to_u8(g), to_u8(r));
    }
  }
  if (!cv::imwrite(path.string(), m))
    throw IoError("cannot write image: " + path.string());
}

bool ffmpeg_available() {
  static const bool ok = [] {
    return std::system("ffmpeg -version > /dev/null 2>&1") == 0;
  }();
  return ok;
}

namespace {

std::string frame_name(size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu.png", i);
  return buf;
}

void write_frame_dir(const FrameSequence& seq, const std::optional<AudioClip>& audio,
                     const fs::path& dir) {
  fs::create_directories(dir);
  for (size_t i = 0; i < seq.frames.size(); ++i)
    save_image(seq.frames[i], dir / frame_name(i));
  if (audio) save_audio_wav16(*audio, dir / "audio.wav");
  json meta;
  meta["fps"] = seq.fps;
  meta["frames"] = seq.frames.size();
  meta["has_audio"] = bool(audio);
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << "\n";
}

FrameSequence read_frame_dir(const fs::path& dir, double fps_hint) {
  FrameSequence seq;
  seq.fps = fps_hint;
  const fs::path meta_path = dir / "meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    json meta = json::parse(in, nullptr, false);
    if (!meta.is_discarded() && meta.contains("fps")) seq.fps = meta["fps"].get<double>();
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) seq.frames.push_back(load_image(f));
  if (seq.frames.empty()) throw IoError("no frames found in " + dir.string());
  for (const auto& f : seq.frames)
    if (f.height() != seq.frames[0].height() || f.width() != seq.frames[0].width())
      throw FormatError("frames differ in size in " + dir.string());
  return seq;
}

}  // namespace

FrameSequence read_frames(const fs::path& path, double fps_hint) {
  if (fs::is_directory(path)) return read_frame_dir(path, fps_hint);
  if (!fs::exists(path)) throw IoError("no such video input: " + path.string());
  if (!ffmpeg_available())
    throw IoError("container input requires ffmpeg, which was not found: " + path.string());
  const fs::path tmp = fs::temp_directory_path() /
                       ("s2v_frames_" + std::to_string(fnv1a64(path.string().data(),
                                                               path.string().size())));
  fs::create_directories(tmp);
  const std::string cmd = "ffmpeg -y -loglevel error -i '" + path.string() + "' '" +
                          (tmp / "frame_%06d.png").string() + "'";
  if (std::system(cmd.c_str()) != 0) throw IoError("ffmpeg failed to decode " + path.string());
  FrameSequence seq = read_frame_dir(tmp, fps_hint);
  fs::remove_all(tmp);
  return seq;
}

void write_video(const FrameSequence& seq, const std::optional<AudioClip>& audio,
                 const fs::path& path) {
  if (seq.frames.empty()) throw DataError("write_video: empty frame sequence");
  if (seq.fps <= 0) throw DataError("write_video: fps must be positive");

  const bool container = path.extension() == ".mp4" || path.extension() == ".mkv";
  if (!container) {
    write_frame_dir(seq, audio, path);
    return;
  }
  if (!ffmpeg_available())
    throw IoError("writing " + path.extension().string() +
                  " requires ffmpeg, which was not found; write to a directory instead");
  const fs::path tmp = path.parent_path() / (path.stem().string() + "_frames_tmp");
  write_frame_dir(seq, audio, tmp);
  std::string cmd = "ffmpeg -y -loglevel error -framerate " + std::to_string(seq.fps) +
                    " -i '" + (tmp / "frame_%06d.png").string() + "'";
  if (audio) cmd += " -i '" + (tmp / "audio.wav").string() + "' -c:a aac -shortest";
  cmd += " -pix_fmt yuv420p '" + path.string() + "'";
  if (std::system(cmd.c_str()) != 0) throw IoError("ffmpeg failed to encode " + path.string());
  fs::remove_all(tmp);
}

double probe_duration(const fs::path& path) {
  if (fs::is_directory(path)) {
    std::ifstream in(path / "meta.json");
    if (!in) throw IoError("no meta.json in " + path.string());
    json meta = json::parse(in);
    return meta["frames"].get<double>() / meta["fps"].get<double>();
  }
  if (!ffmpeg_available()) throw IoError("probing a container requires ffprobe/ffmpeg");
  const std::string cmd =
      "ffprobe -v error -show_entries format=duration -of csv=p=0 '" + path.string() + "'";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw IoError("cannot run ffprobe");
  char buf[64] = {};
  const bool got = fgets(buf, sizeof(buf), pipe) != nullptr;
  pclose(pipe);
  if (!got) throw IoError("ffprobe returned nothing for " + path.string());
  return std::atof(buf);
}

}  // namespace s2v::media
