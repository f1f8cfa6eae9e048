#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "s2v/mfcc.hpp"
#include "support/mfcc_reference.hpp"

using namespace s2v;
using namespace s2v::dsp;

namespace {

media::AudioClip sine(double freq, double seconds, int rate = 16000, double amp = 0.5) {
  media::AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(size_t(seconds * rate));
  for (size_t i = 0; i < clip.samples.size(); ++i)
    clip.samples[i] = amp * std::sin(2.0 * M_PI * freq * double(i) / rate);
  return clip;
}

media::AudioClip silence(double seconds, int rate = 16000) {
  media::AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.assign(size_t(seconds * rate), 0.0);
  return clip;
}

}  // namespace

TEST_CASE("frame count follows floor((N - win) / hop) + 1") {
  const auto clip = sine(440.0, 0.35);
  REQUIRE(clip.samples.size() == 5600);
  const auto seq = compute_mfcc(clip);
  CHECK(seq.n_frames == 33);  // (5600 - 400) / 160 + 1
  CHECK(seq.n_coeffs == 13);
  CHECK(seq.frame_rate == doctest::Approx(100.0));
}

TEST_CASE("silence yields identical frames with zero c1..c12") {
  const auto seq = compute_mfcc(silence(0.5));
  for (int t = 0; t < seq.n_frames; ++t) {
    for (int i = 1; i < 13; ++i) CHECK(seq.at(t, i) == doctest::Approx(0.0).epsilon(1e-12));
    for (int i = 0; i < 13; ++i) CHECK(seq.at(t, i) == seq.at(0, i));
  }
  // c0 is the DCT of the constant log-floor vector, far from zero
  CHECK(std::abs(seq.at(0, 0)) > 100.0);
}

TEST_CASE("matches the independently coded reference on a pure tone") {
  const auto clip = sine(1000.0, 0.5);
  const MfccConfig cfg;
  const auto seq = compute_mfcc(clip, cfg);
  const auto ref = toy::mfcc_reference(clip, cfg);
  double max_abs = 0;
  for (int t = 0; t < seq.n_frames; ++t)
    for (int i = 0; i < 13; ++i)
      max_abs = std::max(max_abs, std::abs(seq.at(t, i) - ref[size_t(t) * 13 + size_t(i)]));
  CHECK(max_abs < 1e-6);
}

TEST_CASE("too-short clips are rejected, silence is not") {
  media::AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(300, 0.0);  // < 25 ms
  CHECK_THROWS_AS(compute_mfcc(clip), DataError);
  CHECK_NOTHROW(compute_mfcc(silence(0.1)));
}

TEST_CASE("windows always come out 12x35 with c0 dropped") {
  const auto seq = compute_mfcc(sine(700.0, 1.0));
  for (double t : {0.0, 0.2, 0.5, 0.93, 1.0}) {
    const auto w = window_mfcc(seq, t);
    CHECK(w.m.size() == size_t(12) * 35);
    // row r must equal coefficient r+1 of the source frames
    const int center = int(std::lround(t * 100));
    for (int col = 0; col < 35; ++col) {
      const int frame = std::clamp(center - 17 + col, 0, seq.n_frames - 1);
      for (int r = 0; r < 12; ++r) CHECK(w.at(r, col) == seq.at(frame, r + 1));
    }
  }
}

TEST_CASE("mid-clip window is a direct slice, no replication") {
  const auto seq = compute_mfcc(sine(700.0, 2.0));
  const auto w = window_mfcc(seq, 1.0);
  for (int col = 0; col < 35; ++col)
    for (int r = 0; r < 12; ++r) CHECK(w.at(r, col) == seq.at(100 - 17 + col, r + 1));
}

TEST_CASE("window at t=0 edge-replicates frame 0 into the first 18 columns") {
  // distinct frames: random-ish signal
  media::AudioClip clip = sine(432.0, 1.0);
  for (size_t i = 0; i < clip.samples.size(); ++i)
    clip.samples[i] += 0.3 * std::sin(2.0 * M_PI * 97.0 * double(i) / 16000.0 + 0.7);
  const auto seq = compute_mfcc(clip);
  const auto w = window_mfcc(seq, 0.0);
  for (int col = 0; col < 18; ++col)
    for (int r = 0; r < 12; ++r) CHECK(w.at(r, col) == w.at(r, 0));
  bool col18_differs = false;
  for (int r = 0; r < 12; ++r)
    if (w.at(r, 18) != w.at(r, 0)) col18_differs = true;
  CHECK(col18_differs);
}

TEST_CASE("center time outside the clip is rejected") {
  const auto seq = compute_mfcc(sine(440.0, 0.5));
  CHECK_THROWS_AS(window_mfcc(seq, -0.01), DataError);
  CHECK_THROWS_AS(window_mfcc(seq, 0.51), DataError);
}

TEST_CASE("hop-aligned shifts slide frames by exactly one index") {
  media::AudioClip clip = sine(523.0, 1.0);
  for (size_t i = 0; i < clip.samples.size(); ++i)
    clip.samples[i] *= 0.8 + 0.2 * std::sin(2.0 * M_PI * 3.0 * double(i) / 16000.0);
  media::AudioClip shifted;
  shifted.sample_rate = clip.sample_rate;
  shifted.samples.assign(clip.samples.begin() + 160, clip.samples.end());
  const auto a = compute_mfcc(clip);
  const auto b = compute_mfcc(shifted);
  REQUIRE(b.n_frames == a.n_frames - 1);
  for (int t = 0; t < b.n_frames; ++t)
    for (int i = 0; i < 13; ++i)
      CHECK(std::abs(b.at(t, i) - a.at(t + 1, i)) < 1e-6);
}

TEST_CASE("normalize_window semantics") {
  const auto seq = compute_mfcc(sine(350.0, 1.0));
  const auto w = window_mfcc(seq, 0.5);

  SUBCASE("identity stats change nothing") {
    const auto out = normalize_window(w, NormStats::identity());
    for (size_t i = 0; i < w.m.size(); ++i) CHECK(out.m[i] == w.m[i]);
  }
  SUBCASE("constant rows normalize to zero when the mean matches") {
    MfccWindow c;
    for (int r = 0; r < 12; ++r)
      for (int col = 0; col < 35; ++col) c.at(r, col) = 3.25;
    NormStats st;
    st.mean.fill(3.25);
    st.std.fill(2.0);
    const auto out = normalize_window(c, st);
    for (double v : out.m) CHECK(v == doctest::Approx(0.0));
  }
  SUBCASE("self-fitted stats give zero mean, unit std per row") {
    Rng rng(7);
    MfccWindow r;
    for (auto& v : r.m) v = rng.normal() * 3.0 + 1.0;
    const auto st = fit_norm_stats({r});
    const auto out = normalize_window(r, st);
    for (int row = 0; row < 12; ++row) {
      double mean = 0, var = 0;
      for (int col = 0; col < 35; ++col) mean += out.at(row, col);
      mean /= 35.0;
      for (int col = 0; col < 35; ++col)
        var += (out.at(row, col) - mean) * (out.at(row, col) - mean);
      var /= 35.0;
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
  }
  SUBCASE("zero std is rejected") {
    NormStats st = NormStats::identity();
    st.std[3] = 0.0;
    CHECK_THROWS_AS(normalize_window(w, st), DataError);
  }
}
