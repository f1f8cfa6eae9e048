#pragma once

// Synthetic test fixtures: procedurally drawn faces whose mouth opening is
// driven by a per-frame signal, with matching frequency-stepped audio tones.

#include <cmath>
#include <filesystem>
#include <functional>
#include <unistd.h>

#include "s2v/dataset.hpp"
#include "s2v/face_prep.hpp"

namespace toy {

using namespace s2v;

struct FaceStyle {
  float skin_r = 0.82f, skin_g = 0.68f, skin_b = 0.58f;
  float bg = 0.45f;
  float feature = 0.15f;  // eyes/brows darkness
};

inline double ellipse_cov(double x, double y, double cx, double cy, double rx, double ry) {
  const double d = std::sqrt(((x - cx) / rx) * ((x - cx) / rx) +
                             ((y - cy) / ry) * ((y - cy) / ry));
  const double soft = 1.5 / std::min(rx, ry);  // ~1.5 px anti-alias band
  return std::clamp((1.0 - d) / soft + 0.5, 0.0, 1.0);
}

// Face "shader" in canonical 112x112 coordinates.
inline void face_pixel(double x, double y, const FaceStyle& st, double openness, float* rgb) {
  double r = st.bg + 0.08 * (y / 112.0);
  double g = r, b = r;
  auto paint = [&](double cov, double pr, double pg, double pb) {
    r = (1 - cov) * r + cov * pr;
    g = (1 - cov) * g + cov * pg;
    b = (1 - cov) * b + cov * pb;
  };
  paint(ellipse_cov(x, y, 56, 58, 45, 48), st.skin_r, st.skin_g, st.skin_b);
  // brows
  paint(ellipse_cov(x, y, 37, 33, 12, 2), st.feature, st.feature, st.feature);
  paint(ellipse_cov(x, y, 75, 33, 12, 2), st.feature, st.feature, st.feature);
  // eyes
  paint(ellipse_cov(x, y, 38, 42, 8, 2.6), st.feature, st.feature, st.feature + 0.05f);
  paint(ellipse_cov(x, y, 74, 42, 8, 2.6), st.feature, st.feature, st.feature + 0.05f);
  // nose
  paint(ellipse_cov(x, y, 56, 54, 2.2, 13), st.skin_r * 0.85, st.skin_g * 0.85,
        st.skin_b * 0.85);
  paint(ellipse_cov(x, y, 56, 67, 5.5, 2.2), st.skin_r * 0.8, st.skin_g * 0.8,
        st.skin_b * 0.8);
  // mouth: opening grows with the driving signal
  const double mouth_ry = 2.0 + 8.0 * openness;
  paint(ellipse_cov(x, y, 56, 82, 12, mouth_ry), 0.45, 0.15, 0.15);
  if (openness > 0.05)
    paint(ellipse_cov(x, y, 56, 82, 9, std::max(0.5, mouth_ry - 2.5)), 0.12, 0.04, 0.04);
  rgb[0] = float(r);
  rgb[1] = float(g);
  rgb[2] = float(b);
}

inline Image make_face(const FaceStyle& st, double openness) {
  Image img(face::kCanonicalSize, face::kCanonicalSize, 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      face_pixel(x, y, st, openness, &img.at(y, x, 0));
  return img;
}

// Renders the face into an arbitrary frame through a canonical->frame
// similarity transform; landmarks are the transformed canonical points.
inline Image make_face_in_frame(int h, int w, const face::SimilarityTransform& place,
                                const FaceStyle& st, double openness) {
  const auto inv = place.inverse();
  Image img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto [cx, cy] = inv.apply(double(x), double(y));
      face_pixel(cx, cy, st, openness, &img.at(y, x, 0));
    }
  return img;
}

inline face::LandmarkSet landmarks_in_frame(const face::SimilarityTransform& place) {
  const auto canon = face::default_canonical_face();
  face::LandmarkSet out;
  for (int i = 0; i < face::kNumLandmarks; ++i) {
    const auto [x, y] = place.apply(canon.landmarks.x(i), canon.landmarks.y(i));
    out.set(i, x, y);
  }
  return out;
}

// Tone whose pitch and level follow the per-frame mouth signal.
inline media::AudioClip make_tone_audio(const std::vector<double>& openness, double fps,
                                        int rate = 16000) {
  media::AudioClip clip;
  clip.sample_rate = rate;
  const auto n = size_t(std::llround(double(openness.size()) / fps * rate));
  clip.samples.resize(n);
  for (size_t s = 0; s < n; ++s) {
    const double t = double(s) / rate;
    const auto frame = std::min(openness.size() - 1, size_t(t * fps));
    const double o = openness[frame];
    const double f = 300.0 + 700.0 * o;
    clip.samples[s] = (0.25 + 0.2 * o) * std::sin(2.0 * M_PI * f * t);
  }
  return clip;
}

inline std::vector<double> default_openness(size_t n_frames) {
  std::vector<double> o(n_frames);
  for (size_t i = 0; i < n_frames; ++i) o[i] = double(i % 8) / 7.0;
  return o;
}

inline data::AlignedTrack make_track(const std::string& id, size_t n_frames, double fps = 25.0,
                                     const FaceStyle& st = {}) {
  const auto openness = default_openness(n_frames);
  data::AlignedTrack track;
  track.id = id;
  track.frames.fps = fps;
  for (size_t i = 0; i < n_frames; ++i)
    track.frames.frames.push_back(make_face(st, openness[i]));
  track.audio = make_tone_audio(openness, fps);
  return track;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("s2v_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace toy
