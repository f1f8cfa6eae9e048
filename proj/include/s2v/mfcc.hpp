#pragma once

#include <array>
#include <vector>

#include "s2v/media_io.hpp"
#include "s2v/tensor.hpp"

namespace s2v::dsp {

inline constexpr int kWindowCoeffs = 12;  // c1..c12; c0 is dropped
inline constexpr int kWindowSteps = 35;   // 0.35 s at a 100 Hz frame rate

struct MfccConfig {
  int sample_rate = 16000;
  double window_ms = 25.0;   // Hamming analysis window
  double hop_ms = 10.0;      // 100 Hz frame rate
  int n_fft = 512;
  int n_mels = 40;
  double mel_low_hz = 0.0;
  double mel_high_hz = 8000.0;
  int n_coeffs = 13;         // including c0
  double log_floor = 1e-10;

  int window_samples() const { return int(window_ms * sample_rate / 1000.0 + 0.5); }
  int hop_samples() const { return int(hop_ms * sample_rate / 1000.0 + 0.5); }
  double frame_rate() const { return 1000.0 / hop_ms; }
};

// Frame-major MFCC matrix: row t holds c0..c12 of frame t. Frame t's center
// is defined at origin_time + t / frame_rate.
struct MfccSequence {
  std::vector<double> coeffs;  // T * n_coeffs
  int n_frames = 0;
  int n_coeffs = 13;
  double frame_rate = 100.0;
  double origin_time = 0.0;
  double clip_duration = 0.0;

  double& at(int frame, int coeff) { return coeffs[size_t(frame) * n_coeffs + coeff]; }
  double at(int frame, int coeff) const { return coeffs[size_t(frame) * n_coeffs + coeff]; }
  double frame_center_time(int t) const { return origin_time + t / frame_rate; }
};

// 12x35 slice fed to the audio encoder. Rows are c1..c12, columns time steps.
struct MfccWindow {
  std::array<double, size_t(kWindowCoeffs) * kWindowSteps> m{};
  double center_time = 0.0;

  double& at(int row, int col) { return m[size_t(row) * kWindowSteps + col]; }
  double at(int row, int col) const { return m[size_t(row) * kWindowSteps + col]; }

  // (1, 12, 35, 1) network input
  Tensor to_tensor() const {
    Tensor t({1, kWindowCoeffs, kWindowSteps, 1});
    for (size_t i = 0; i < m.size(); ++i) t[int64_t(i)] = float(m[i]);
    return t;
  }
};

// Per-coefficient feature normalization, fitted on the training split and
// stored in the checkpoint so inference matches training.
struct NormStats {
  std::array<double, kWindowCoeffs> mean{};
  std::array<double, kWindowCoeffs> std{};

  static NormStats identity() {
    NormStats s;
    s.mean.fill(0.0);
    s.std.fill(1.0);
    return s;
  }
};

MfccSequence compute_mfcc(const media::AudioClip& clip, const MfccConfig& cfg = {});
MfccWindow window_mfcc(const MfccSequence& seq, double center_time);
MfccWindow normalize_window(const MfccWindow& w, const NormStats& stats);

// Population moments per coefficient row over a set of windows. Stds below
// floor_std are clamped up to it (floor_std = 0 keeps exact moments).
NormStats fit_norm_stats(const std::vector<MfccWindow>& windows, double floor_std = 0.0);

}  // namespace s2v::dsp
