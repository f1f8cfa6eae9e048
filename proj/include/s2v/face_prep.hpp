#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <vector>

#include "s2v/image.hpp"
#include "s2v/media_io.hpp"

namespace s2v::face {

inline constexpr int kNumLandmarks = 68;
inline constexpr int kCanonicalSize = 112;

// 68-point landmark convention: jaw 0-16, brows 17-26, nose 27-35,
// eyes 36-47, mouth 48-67.
struct LandmarkSet {
  std::array<double, size_t(kNumLandmarks) * 2> pts{};  // x0 y0 x1 y1 ...

  double x(int i) const { return pts[size_t(i) * 2]; }
  double y(int i) const { return pts[size_t(i) * 2 + 1]; }
  void set(int i, double x, double y) {
    pts[size_t(i) * 2] = x;
    pts[size_t(i) * 2 + 1] = y;
  }
  bool all_finite() const {
    for (double v : pts)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// p' = scale * R(rotation) * p + (tx, ty)
struct SimilarityTransform {
  double scale = 1.0;
  double rotation = 0.0;  // radians
  double tx = 0.0, ty = 0.0;

  std::pair<double, double> apply(double x, double y) const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    return {scale * (c * x - s * y) + tx, scale * (s * x + c * y) + ty};
  }

  SimilarityTransform inverse() const {
    SimilarityTransform inv;
    inv.scale = 1.0 / scale;
    inv.rotation = -rotation;
    const double c = std::cos(inv.rotation), s = std::sin(inv.rotation);
    inv.tx = -inv.scale * (c * tx - s * ty);
    inv.ty = -inv.scale * (s * tx + c * ty);
    return inv;
  }

  static SimilarityTransform identity() { return {}; }
};

// Fixed exemplar landmark configuration in the 112x112 frame that all faces
// are registered to. Alignment uses only the eye and nose indices.
struct CanonicalFace {
  LandmarkSet landmarks;

  static constexpr int kNoseBegin = 27, kNoseEnd = 36;  // [27, 35]
  static constexpr int kEyesBegin = 36, kEyesEnd = 48;  // [36, 47]
  static constexpr int kMouthBegin = 48, kMouthEnd = 68;

  static std::vector<int> alignment_indices() {
    std::vector<int> idx;
    for (int i = kNoseBegin; i < kEyesEnd; ++i) idx.push_back(i);
    return idx;
  }

  double max_eye_row() const {
    double r = 0;
    for (int i = kEyesBegin; i < kEyesEnd; ++i) r = std::max(r, landmarks.y(i));
    return r;
  }
};

// The repo-defined canonical face (also shipped as data/canonical_face_112.txt).
CanonicalFace default_canonical_face();

// Shot boundaries via chi-square distance between per-channel 32-bin
// histograms of consecutive frames. Index i marks a cut between i-1 and i.
std::vector<size_t> detect_shots(const media::FrameSequence& frames, double threshold);
double histogram_distance(const Image& a, const Image& b);

// Least-squares similarity (Procrustes with isotropic scale) mapping the
// eye+nose landmarks of src onto the canonical ones. Mouth and jaw points
// never enter the solve.
SimilarityTransform estimate_similarity(const LandmarkSet& src, const CanonicalFace& canon);

// Resamples into the 112x112 canonical frame: out(p) = image(t(p)) with
// bilinear taps, zeros outside the source. t maps canonical coordinates into
// source coordinates, i.e. the inverse of an estimate_similarity result.
Image warp_to_canonical(const Image& image, const SimilarityTransform& canonical_to_source);

// Landmark sidecar files: one record per frame, "frame_index x0 y0 ... x67 y67".
std::map<size_t, LandmarkSet> load_landmark_sidecar(const std::filesystem::path& path);
void save_landmark_sidecar(const std::map<size_t, LandmarkSet>& records,
                           const std::filesystem::path& path);
CanonicalFace load_canonical_face(const std::filesystem::path& path);

}  // namespace s2v::face
