#pragma once

// Independent MFCC oracle: naive O(N^2) DFT, no shared code with the
// production frontend. Used to pin expected values for the fast path.

#include <cmath>
#include <vector>

#include "s2v/mfcc.hpp"

namespace toy {

// Returns a flat T x n_coeffs matrix, frame-major.
inline std::vector<double> mfcc_reference(const s2v::media::AudioClip& clip,
                                          const s2v::dsp::MfccConfig& cfg) {
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  const int n_frames = (int(clip.samples.size()) - win) / hop + 1;
  const int n_bins = cfg.n_fft / 2 + 1;

  auto mel_of = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto hz_of = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };

  std::vector<double> out(size_t(n_frames) * cfg.n_coeffs, 0.0);
  std::vector<double> windowed(static_cast<size_t>(win));
  std::vector<double> power(static_cast<size_t>(n_bins));
  std::vector<double> mel_energy(static_cast<size_t>(cfg.n_mels));

  for (int t = 0; t < n_frames; ++t) {
    for (int n = 0; n < win; ++n) {
      const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (win - 1));
      windowed[size_t(n)] = clip.samples[size_t(t) * hop + size_t(n)] * w;
    }
    for (int k = 0; k < n_bins; ++k) {
      double re = 0, im = 0;
      for (int n = 0; n < win; ++n) {  // zero padding beyond win contributes nothing
        const double ang = -2.0 * M_PI * k * n / cfg.n_fft;
        re += windowed[size_t(n)] * std::cos(ang);
        im += windowed[size_t(n)] * std::sin(ang);
      }
      power[size_t(k)] = re * re + im * im;
    }
    const double mel_hi = mel_of(cfg.mel_high_hz);
    const double mel_lo = mel_of(cfg.mel_low_hz);
    for (int j = 0; j < cfg.n_mels; ++j) {
      const double f_lo = hz_of(mel_lo + (mel_hi - mel_lo) * j / (cfg.n_mels + 1.0));
      const double f_mid = hz_of(mel_lo + (mel_hi - mel_lo) * (j + 1) / (cfg.n_mels + 1.0));
      const double f_hi = hz_of(mel_lo + (mel_hi - mel_lo) * (j + 2) / (cfg.n_mels + 1.0));
      double acc = 0;
      for (int k = 0; k < n_bins; ++k) {
        const double f = double(k) * cfg.sample_rate / cfg.n_fft;
        double w = 0;
        if (f > f_lo && f < f_mid)
          w = (f - f_lo) / (f_mid - f_lo);
        else if (f >= f_mid && f < f_hi)
          w = (f_hi - f) / (f_hi - f_mid);
        acc += w * power[size_t(k)];
      }
      mel_energy[size_t(j)] = std::log(std::max(acc, cfg.log_floor));
    }
    for (int i = 0; i < cfg.n_coeffs; ++i) {
      double c = 0;
      for (int j = 0; j < cfg.n_mels; ++j)
        c += mel_energy[size_t(j)] *
             std::cos(M_PI * i * (2.0 * j + 1.0) / (2.0 * cfg.n_mels));
      c *= (i == 0) ? std::sqrt(1.0 / cfg.n_mels) : std::sqrt(2.0 / cfg.n_mels);
      out[size_t(t) * cfg.n_coeffs + size_t(i)] = c;
    }
  }
  return out;
}

}  // namespace toy
