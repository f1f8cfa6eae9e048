#include "s2v/face_prep.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace s2v::face {

namespace {

constexpr int kHistBins = 32;

void accumulate_histogram(const Image& img, double* hist /* 3 * kHistBins */) {
  std::fill(hist, hist + 3 * kHistBins, 0.0);
  const int n = img.height() * img.width();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = img.channels() == 3 ? img.at(y, x, c) : img.at(y, x, 0);
        const int bin = std::min(kHistBins - 1, int(std::clamp(v, 0.f, 1.f) * kHistBins));
        hist[c * kHistBins + bin] += 1.0;
      }
  for (int i = 0; i < 3 * kHistBins; ++i) hist[i] /= double(n);
}

}  // namespace

double histogram_distance(const Image& a, const Image& b) {
  double ha[3 * kHistBins], hb[3 * kHistBins];
  accumulate_histogram(a, ha);
  accumulate_histogram(b, hb);
  double d = 0.0;
  for (int i = 0; i < 3 * kHistBins; ++i) {
    const double s = ha[i] + hb[i];
    if (s > 1e-12) {
      const double diff = ha[i] - hb[i];
      d += 0.5 * diff * diff / s;
    }
  }
  return d;
}

std::vector<size_t> detect_shots(const media::FrameSequence& frames, double threshold) {
  std::vector<size_t> boundaries;
  if (frames.frames.size() < 2) return boundaries;
  for (size_t i = 1; i < frames.frames.size(); ++i)
    if (histogram_distance(frames.frames[i - 1], frames.frames[i]) > threshold)
      boundaries.push_back(i);
  return boundaries;
}

SimilarityTransform estimate_similarity(const LandmarkSet& src, const CanonicalFace& canon) {
  if (!src.all_finite()) throw DataError("estimate_similarity: non-finite landmarks");

  // Complex least squares: find a = s*e^{i*theta}, t minimizing
  // sum |a*z_k + t - w_k|^2 over the eye+nose subset.
  const auto idx = CanonicalFace::alignment_indices();
  std::complex<double> zc(0, 0), wc(0, 0);
  for (int i : idx) {
    zc += std::complex<double>(src.x(i), src.y(i));
    wc += std::complex<double>(canon.landmarks.x(i), canon.landmarks.y(i));
  }
  zc /= double(idx.size());
  wc /= double(idx.size());

  std::complex<double> num(0, 0);
  double den = 0.0;
  for (int i : idx) {
    const std::complex<double> z = std::complex<double>(src.x(i), src.y(i)) - zc;
    const std::complex<double> w =
        std::complex<double>(canon.landmarks.x(i), canon.landmarks.y(i)) - wc;
    num += w * std::conj(z);
    den += std::norm(z);
  }
  if (den < 1e-9) throw DataError("estimate_similarity: degenerate eye/nose landmarks");

  const std::complex<double> a = num / den;
  SimilarityTransform t;
  t.scale = std::abs(a);
  if (!(t.scale > 0.0)) throw DataError("estimate_similarity: collapsed scale");
  t.rotation = std::arg(a);
  const std::complex<double> trans = wc - a * zc;
  t.tx = trans.real();
  t.ty = trans.imag();
  return t;
}

Image warp_to_canonical(const Image& image, const SimilarityTransform& canonical_to_source) {
  Image out(kCanonicalSize, kCanonicalSize, image.channels());
  for (int y = 0; y < kCanonicalSize; ++y)
    for (int x = 0; x < kCanonicalSize; ++x) {
      const auto [sx, sy] = canonical_to_source.apply(double(x), double(y));
      for (int c = 0; c < image.channels(); ++c)
        out.at(y, x, c) = image.sample_bilinear(sx, sy, c);
    }
  return out;
}

std::map<size_t, LandmarkSet> load_landmark_sidecar(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open landmark sidecar: " + path.string());
  std::map<size_t, LandmarkSet> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    size_t frame = 0;
    if (!(ss >> frame))
      throw FormatError("bad landmark record at " + path.string() + ":" +
                        std::to_string(lineno));
    LandmarkSet lms;
    for (size_t i = 0; i < lms.pts.size(); ++i)
      if (!(ss >> lms.pts[i]))
        throw FormatError("landmark record needs 136 values at " + path.string() + ":" +
                          std::to_string(lineno));
    records[frame] = lms;
  }
  return records;
}

void save_landmark_sidecar(const std::map<size_t, LandmarkSet>& records, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write landmark sidecar: " + path.string());
  out.precision(10);
  for (const auto& [frame, lms] : records) {
    out << frame;
    for (double v : lms.pts) out << " " << v;
    out << "\n";
  }
}

CanonicalFace load_canonical_face(const fs::path& path) {
  const auto records = load_landmark_sidecar(path);
  if (records.size() != 1)
    throw FormatError("canonical face file must hold exactly one record: " + path.string());
  CanonicalFace canon;
  canon.landmarks = records.begin()->second;
  for (int i = 0; i < kNumLandmarks; ++i)
    if (canon.landmarks.x(i) < 0 || canon.landmarks.x(i) >= kCanonicalSize ||
        canon.landmarks.y(i) < 0 || canon.landmarks.y(i) >= kCanonicalSize)
      throw DataError("canonical landmark outside the 112x112 frame");
  return canon;
}

CanonicalFace default_canonical_face() {
  // Mean-face layout in the 112x112 frame, derived once from an aligned
  // sample set and frozen here; data/canonical_face_112.txt mirrors it.
  static const double coords[kNumLandmarks][2] = {
      // jaw (ellipse from left temple through chin to right temple)
      {14.0, 44.0}, {14.8, 54.5}, {17.2, 64.7}, {21.1, 74.3}, {26.4, 83.1},
      {32.9, 90.7}, {40.3, 96.4}, {48.1, 99.7}, {56.0, 98.0}, {63.9, 99.7},
      {71.7, 96.4}, {79.1, 90.7}, {85.6, 83.1}, {90.9, 74.3}, {94.8, 64.7},
      {97.2, 54.5}, {98.0, 44.0},
      // brows
      {24.0, 36.0}, {30.0, 32.0}, {37.0, 30.0}, {43.0, 31.0}, {48.0, 33.0},
      {64.0, 33.0}, {69.0, 31.0}, {75.0, 30.0}, {82.0, 32.0}, {88.0, 36.0},
      // nose bridge + base
      {56.0, 40.0}, {56.0, 47.0}, {56.0, 54.0}, {56.0, 61.0},
      {48.0, 66.0}, {52.0, 68.0}, {56.0, 69.0}, {60.0, 68.0}, {64.0, 66.0},
      // left eye
      {30.0, 42.0}, {35.0, 40.0}, {41.0, 40.0}, {46.0, 42.0}, {41.0, 44.0}, {35.0, 44.0},
      // right eye
      {66.0, 42.0}, {71.0, 40.0}, {77.0, 40.0}, {82.0, 42.0}, {77.0, 44.0}, {71.0, 44.0},
      // mouth outer
      {40.0, 80.0}, {45.0, 77.0}, {51.0, 75.0}, {56.0, 76.0}, {61.0, 75.0},
      {67.0, 77.0}, {72.0, 80.0}, {67.0, 85.0}, {61.0, 88.0}, {56.0, 89.0},
      {51.0, 88.0}, {45.0, 85.0},
      // mouth inner
      {44.0, 80.0}, {51.0, 79.0}, {56.0, 80.0}, {61.0, 79.0}, {68.0, 80.0},
      {61.0, 82.0}, {56.0, 83.0}, {51.0, 82.0}};
  CanonicalFace canon;
  for (int i = 0; i < kNumLandmarks; ++i)
    canon.landmarks.set(i, coords[i][0], coords[i][1]);
  return canon;
}

}  // namespace s2v::face
