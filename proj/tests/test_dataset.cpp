#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <fstream>

#include "doctest.h"
#include "s2v/dataset.hpp"
#include "support/toy.hpp"

using namespace s2v;
using namespace s2v::data;

namespace {

BuildConfig toy_build_cfg(int k = 1, int min_gap = 25, uint64_t seed = 0) {
  BuildConfig cfg;
  cfg.k = k;
  cfg.min_gap_frames = min_gap;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("100-frame track at stride 5 yields the 20 expected samples with gap respected") {
  const auto track = toy::make_track("t100", 100);
  const auto samples = build_samples(track, toy_build_cfg(1, 25));
  REQUIRE(samples.size() == 20);
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(samples[i].frame_index == uint32_t(5 * i));
    CHECK(samples[i].k() == 1);
  }
  // identity stills obey the gap: each must match a frame at distance >= 25
  for (const auto& s : samples) {
    bool found = false;
    for (size_t j = 0; j < track.frames.frames.size(); ++j) {
      if (std::llabs(int64_t(j) - int64_t(s.frame_index)) < 25) continue;
      if (track.frames.frames[j].to_tensor().vec() == s.identity.vec()) found = true;
    }
    CHECK(found);
  }
}

TEST_CASE("every target equals the aligned frame at the window center") {
  const auto track = toy::make_track("t40", 40);
  const auto samples = build_samples(track, toy_build_cfg(1, 10));
  REQUIRE(!samples.empty());
  for (const auto& s : samples) {
    CHECK(s.target.vec() == track.frames.frames[s.frame_index].to_tensor().vec());
    CHECK(s.mfcc.center_time ==
          doctest::Approx((s.frame_index + 0.5) / track.frames.fps).epsilon(1e-12));
  }
}

TEST_CASE("k=5 stacks five distinct stills channel-wise") {
  const auto track = toy::make_track("t5", 100);
  const auto samples = build_samples(track, toy_build_cfg(5, 20));
  REQUIRE(!samples.empty());
  for (const auto& s : samples) {
    CHECK(s.identity.shape() == std::vector<int64_t>({112, 112, 15}));
    CHECK(s.k() == 5);
  }
}

TEST_CASE("same seed rebuilds bit-identical samples; different seeds differ") {
  const auto track = toy::make_track("tseed", 60);
  const auto a = build_samples(track, toy_build_cfg(1, 10, 42));
  const auto b = build_samples(track, toy_build_cfg(1, 10, 42));
  const auto c = build_samples(track, toy_build_cfg(1, 10, 43));
  REQUIRE(a.size() == b.size());
  bool identical_ab = true, identical_ac = a.size() == c.size();
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].identity.vec() != b[i].identity.vec()) identical_ab = false;
    if (identical_ac && a[i].identity.vec() != c[i].identity.vec()) identical_ac = false;
  }
  CHECK(identical_ab);
  CHECK(!identical_ac);
}

TEST_CASE("tracks too short for the gap yield an empty list, not an error") {
  const auto track = toy::make_track("tshort", 20);
  CHECK(build_samples(track, toy_build_cfg(1, 25)).empty());
}

TEST_CASE("packed records round-trip bit-exactly") {
  toy::TempDir tmp("packed");
  const auto track = toy::make_track("tpack", 40);
  auto samples = build_samples(track, toy_build_cfg(1, 10));
  REQUIRE(samples.size() >= 2);
  const auto offsets = write_samples(samples, tmp.path / "t.bin");
  REQUIRE(offsets.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto back = read_sample(tmp.path / "t.bin", offsets[i]);
    CHECK(back.frame_index == samples[i].frame_index);
    CHECK(back.identity.vec() == samples[i].identity.vec());
    CHECK(back.target.vec() == samples[i].target.vec());
    for (size_t j = 0; j < back.mfcc.m.size(); ++j)
      CHECK(back.mfcc.m[j] == doctest::Approx(samples[i].mfcc.m[j]).epsilon(1e-6));
    const auto w = read_sample_window(tmp.path / "t.bin", offsets[i]);
    CHECK(w.m == back.mfcc.m);
  }
  CHECK_THROWS_AS(read_sample(tmp.path / "missing.bin", 0), IoError);
}

TEST_CASE("manifest save/load round-trips and feeds a PackedSource") {
  toy::TempDir tmp("manifest");
  std::filesystem::create_directories(tmp.path / "tracks");
  const auto track = toy::make_track("tm", 40);
  auto samples = build_samples(track, toy_build_cfg(1, 10));
  const auto offsets = write_samples(samples, tmp.path / "tracks" / "tm.bin");

  Manifest m;
  m.tracks.push_back({"tm", "train", track.frames.frames.size() / track.frames.fps,
                      track.frames.frames.size(), track.frames.fps});
  for (size_t i = 0; i < samples.size(); ++i)
    m.samples.push_back({"tracks/tm.bin", offsets[i], 1, "tm", samples[i].frame_index,
                         i % 2 ? "train" : "val"});
  save_manifest(m, tmp.path / "manifest.jsonl");
  const auto back = load_manifest(tmp.path / "manifest.jsonl");
  CHECK(back.tracks.size() == 1);
  CHECK(back.samples.size() == samples.size());
  CHECK(back.tracks[0].duration_s == doctest::Approx(1.6));

  PackedSource train_src(tmp.path / "manifest.jsonl", "train");
  PackedSource val_src(tmp.path / "manifest.jsonl", "val");
  CHECK(train_src.size() + val_src.size() == samples.size());
  const auto s0 = val_src.get(0);
  CHECK(s0.target.vec() == samples[0].target.vec());
}

TEST_CASE("manifest_stats computes hours and counts") {
  SUBCASE("empty manifest") {
    const auto s = manifest_stats(Manifest{});
    CHECK(s.hours == 0.0);
    CHECK(s.samples == 0);
  }
  SUBCASE("two 60-second tracks with 12 samples") {
    Manifest m;
    m.tracks.push_back({"a", "train", 60.0, 1500, 25.0});
    m.tracks.push_back({"b", "train", 60.0, 1500, 25.0});
    for (int i = 0; i < 12; ++i)
      m.samples.push_back({"x.bin", 0, 1, "a", uint32_t(i), "train"});
    const auto s = manifest_stats(m);
    CHECK(s.hours == doctest::Approx(120.0 / 3600.0).epsilon(1e-9));
    CHECK(s.hours == doctest::Approx(0.0333).epsilon(0.01));
    CHECK(s.samples == 12);
    const auto val = manifest_stats(m, "val");
    CHECK(val.hours == 0.0);
    CHECK(val.samples == 0);
  }
}

TEST_CASE("rebuilding and rewriting with one seed is byte-identical") {
  toy::TempDir tmp("det");
  const auto track = toy::make_track("tdet", 50);
  for (int run = 0; run < 2; ++run) {
    auto samples = build_samples(track, toy_build_cfg(2 - 1, 10, 7));
    write_samples(samples, tmp.path / ("run" + std::to_string(run) + ".bin"));
  }
  std::ifstream f0(tmp.path / "run0.bin", std::ios::binary),
      f1(tmp.path / "run1.bin", std::ios::binary);
  std::string s0((std::istreambuf_iterator<char>(f0)), {});
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  CHECK(s0 == s1);
  CHECK(!s0.empty());
}
