#include "s2v/mfcc.hpp"

#include <cmath>
#include <complex>

namespace s2v::dsp {

namespace {

// Iterative radix-2 Cooley-Tukey; n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / double(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters with edges spaced linearly on the mel scale.
std::vector<std::vector<double>> mel_filterbank(const MfccConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.mel_low_hz);
  const double mel_hi = hz_to_mel(cfg.mel_high_hz);
  std::vector<double> edges(size_t(cfg.n_mels) + 2);
  for (size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(i) / double(cfg.n_mels + 1));

  std::vector<std::vector<double>> bank(size_t(cfg.n_mels),
                                        std::vector<double>(size_t(n_bins), 0.0));
  for (int j = 0; j < cfg.n_mels; ++j) {
    const double lo = edges[size_t(j)];
    const double mid = edges[size_t(j) + 1];
    const double hi = edges[size_t(j) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = double(k) * cfg.sample_rate / cfg.n_fft;
      if (f > lo && f < mid)
        bank[size_t(j)][size_t(k)] = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        bank[size_t(j)][size_t(k)] = (hi - f) / (hi - mid);
    }
  }
  return bank;
}

}  // namespace

MfccSequence compute_mfcc(const media::AudioClip& clip, const MfccConfig& cfg) {
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  if (int(clip.samples.size()) < win)
    throw DataError("compute_mfcc: clip shorter than one analysis window");
  if ((cfg.n_fft & (cfg.n_fft - 1)) != 0 || cfg.n_fft < win)
    throw DataError("compute_mfcc: n_fft must be a power of two >= window length");

  const int n_frames = (int(clip.samples.size()) - win) / hop + 1;
  const int n_bins = cfg.n_fft / 2 + 1;

  std::vector<double> hamming(static_cast<size_t>(win));
  for (int n = 0; n < win; ++n)
    hamming[size_t(n)] = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (win - 1));

  const auto bank = mel_filterbank(cfg);

  // Orthonormal DCT-II basis, n_coeffs x n_mels
  std::vector<double> dct(size_t(cfg.n_coeffs) * cfg.n_mels);
  for (int i = 0; i < cfg.n_coeffs; ++i) {
    const double scale =
        (i == 0 ? std::sqrt(1.0 / cfg.n_mels) : std::sqrt(2.0 / cfg.n_mels));
    for (int j = 0; j < cfg.n_mels; ++j)
      dct[size_t(i) * cfg.n_mels + j] =
          scale * std::cos(M_PI * i * (2.0 * j + 1.0) / (2.0 * cfg.n_mels));
  }

  MfccSequence seq;
  seq.n_frames = n_frames;
  seq.n_coeffs = cfg.n_coeffs;
  seq.frame_rate = cfg.frame_rate();
  seq.origin_time = 0.0;
  seq.clip_duration = clip.duration_seconds();
  seq.coeffs.resize(size_t(n_frames) * cfg.n_coeffs);

  std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.n_fft));
  std::vector<double> power(static_cast<size_t>(n_bins));
  std::vector<double> log_mel(static_cast<size_t>(cfg.n_mels));

  for (int t = 0; t < n_frames; ++t) {
    const size_t off = size_t(t) * hop;
    for (int n = 0; n < win; ++n)
      buf[size_t(n)] = clip.samples[off + size_t(n)] * hamming[size_t(n)];
    for (int n = win; n < cfg.n_fft; ++n) buf[size_t(n)] = 0.0;
    fft_inplace(buf);
    for (int k = 0; k < n_bins; ++k) power[size_t(k)] = std::norm(buf[size_t(k)]);

    for (int j = 0; j < cfg.n_mels; ++j) {
      double e = 0.0;
      const auto& f = bank[size_t(j)];
      for (int k = 0; k < n_bins; ++k) e += f[size_t(k)] * power[size_t(k)];
      log_mel[size_t(j)] = std::log(std::max(e, cfg.log_floor));
    }
    for (int i = 0; i < cfg.n_coeffs; ++i) {
      double c = 0.0;
      for (int j = 0; j < cfg.n_mels; ++j)
        c += dct[size_t(i) * cfg.n_mels + j] * log_mel[size_t(j)];
      seq.at(t, i) = c;
    }
  }
  return seq;
}

MfccWindow window_mfcc(const MfccSequence& seq, double center_time) {
  if (seq.n_frames < 1) throw DataError("window_mfcc: empty sequence");
  if (center_time < 0.0 || center_time > seq.clip_duration)
    throw DataError("window_mfcc: center time outside the clip");
  if (seq.n_coeffs < kWindowCoeffs + 1)
    throw DataError("window_mfcc: sequence carries fewer than 13 coefficients");

  const int center = int(std::lround((center_time - seq.origin_time) * seq.frame_rate));
  const int half = kWindowSteps / 2;

  MfccWindow w;
  w.center_time = center_time;
  for (int col = 0; col < kWindowSteps; ++col) {
    const int t = std::clamp(center - half + col, 0, seq.n_frames - 1);
    for (int row = 0; row < kWindowCoeffs; ++row)
      w.at(row, col) = seq.at(t, row + 1);  // c0 dropped
  }
  return w;
}

MfccWindow normalize_window(const MfccWindow& w, const NormStats& stats) {
  MfccWindow out;
  out.center_time = w.center_time;
  for (int r = 0; r < kWindowCoeffs; ++r) {
    if (!(stats.std[size_t(r)] > 0.0))
      throw DataError("normalize_window: std must be positive for coefficient " +
                      std::to_string(r + 1));
    for (int c = 0; c < kWindowSteps; ++c)
      out.at(r, c) = (w.at(r, c) - stats.mean[size_t(r)]) / stats.std[size_t(r)];
  }
  return out;
}

NormStats fit_norm_stats(const std::vector<MfccWindow>& windows, double floor_std) {
  if (windows.empty()) throw DataError("fit_norm_stats: no windows");
  NormStats s;
  const double n = double(windows.size()) * kWindowSteps;
  for (int r = 0; r < kWindowCoeffs; ++r) {
    double sum = 0.0, sum2 = 0.0;
    for (const auto& w : windows)
      for (int c = 0; c < kWindowSteps; ++c) {
        sum += w.at(r, c);
        sum2 += w.at(r, c) * w.at(r, c);
      }
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    s.mean[size_t(r)] = mean;
    s.std[size_t(r)] = std::max(std::sqrt(var), floor_std);
  }
  return s;
}

}  // namespace s2v::dsp
