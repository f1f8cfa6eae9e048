#include "s2v/prep.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace s2v::cli {

namespace {

struct TrackInput {
  std::string name;
  std::string split;
  fs::path dir;
};

bool is_track_dir(const fs::path& dir) { return fs::exists(dir / "audio.wav"); }

std::vector<TrackInput> discover_tracks(const fs::path& input) {
  std::vector<TrackInput> tracks;
  auto scan_split = [&](const fs::path& dir, const std::string& split) {
    if (!fs::is_directory(dir)) return;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && is_track_dir(e.path()))
        tracks.push_back({e.path().filename().string(), split, e.path()});
  };
  scan_split(input / "train", "train");
  scan_split(input / "val", "val");
  for (const auto& e : fs::directory_iterator(input)) {
    const auto name = e.path().filename().string();
    if (name == "train" || name == "val") continue;
    if (e.is_directory() && is_track_dir(e.path()))
      tracks.push_back({name, "train", e.path()});
  }
  std::sort(tracks.begin(), tracks.end(),
            [](const TrackInput& a, const TrackInput& b) {
              return std::tie(a.split, a.name) < std::tie(b.split, b.name);
            });
  return tracks;
}

media::FrameSequence read_track_frames(const fs::path& dir, double fps) {
  if (fs::is_directory(dir / "frames")) return media::read_frames(dir / "frames", fps);
  for (const auto& ext : {".mp4", ".mkv"}) {
    const fs::path video = dir / ("video" + std::string(ext));
    if (fs::exists(video)) return media::read_frames(video, fps);
  }
  throw IoError("track " + dir.string() + " has neither frames/ nor a video file");
}

void process_track(const TrackInput& track, const PrepOptions& opts,
                   const face::CanonicalFace& canon, data::Manifest& manifest,
                   const fs::path& tracks_dir) {
  const auto& cfg = opts.cfg;
  media::FrameSequence frames = read_track_frames(track.dir, cfg.prep.fps);
  media::AudioClip audio = media::load_audio(track.dir / "audio.wav");
  if (audio.sample_rate != cfg.mfcc.sample_rate)
    audio = media::resample(audio, cfg.mfcc.sample_rate);
  const auto landmarks = face::load_landmark_sidecar(track.dir / "landmarks.txt");

  const auto boundaries = face::detect_shots(frames, cfg.prep.shot_threshold);
  std::vector<size_t> cuts{0};
  cuts.insert(cuts.end(), boundaries.begin(), boundaries.end());
  cuts.push_back(frames.frames.size());

  for (size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
    const size_t a = cuts[seg], b = cuts[seg + 1];
    if (b <= a) continue;
    data::AlignedTrack aligned;
    aligned.id = cuts.size() > 2 ? track.name + "#s" + std::to_string(seg) : track.name;
    aligned.frames.fps = frames.fps;
    for (size_t f = a; f < b; ++f) {
      auto it = landmarks.find(f);
      if (it == landmarks.end())
        throw DataError("track " + track.name + ": missing landmarks for frame " +
                        std::to_string(f));
      const auto t = face::estimate_similarity(it->second, canon);
      aligned.frames.frames.push_back(
          face::warp_to_canonical(frames.frames[f], t.inverse()));
    }
    const auto s0 = size_t(double(a) / frames.fps * audio.sample_rate);
    const auto s1 = std::min(audio.samples.size(),
                             size_t(double(b) / frames.fps * audio.sample_rate));
    aligned.audio.sample_rate = audio.sample_rate;
    if (s1 > s0)
      aligned.audio.samples.assign(audio.samples.begin() + int64_t(s0),
                                   audio.samples.begin() + int64_t(s1));

    data::BuildConfig bc;
    bc.frame_stride = cfg.prep.frame_stride;
    bc.min_gap_frames = cfg.prep.min_gap_frames;
    bc.k = cfg.net.k_identity;
    bc.seed = cfg.seed;
    bc.mfcc = cfg.mfcc;
    const auto samples = data::build_samples(aligned, bc);

    data::TrackInfo info;
    info.id = aligned.id;
    info.split = track.split;
    info.duration_s = double(aligned.frames.frames.size()) / frames.fps;
    info.frames = aligned.frames.frames.size();
    info.fps = frames.fps;
    manifest.tracks.push_back(info);

    if (samples.empty()) continue;
    const std::string file = "tracks/" + aligned.id + ".bin";
    const auto offsets = data::write_samples(samples, tracks_dir / (aligned.id + ".bin"));
    for (size_t i = 0; i < samples.size(); ++i) {
      data::SampleDescriptor d;
      d.file = file;
      d.offset = offsets[i];
      d.k = cfg.net.k_identity;
      d.track = aligned.id;
      d.frame = samples[i].frame_index;
      d.split = track.split;
      manifest.samples.push_back(std::move(d));
    }
  }
}

}  // namespace

PrepResult run_prep(const PrepOptions& opts) {
  if (!fs::is_directory(opts.input))
    throw IoError("prep input is not a directory: " + opts.input.string());
  const auto tracks = discover_tracks(opts.input);
  if (tracks.empty()) throw DataError("no tracks found under " + opts.input.string());

  const face::CanonicalFace canon = opts.canonical_path.empty()
                                        ? face::default_canonical_face()
                                        : face::load_canonical_face(opts.canonical_path);
  fs::create_directories(opts.out / "tracks");

  PrepResult result;
  for (const auto& t : tracks) {
    try {
      process_track(t, opts, canon, result.manifest, opts.out / "tracks");
      ++result.tracks_ok;
    } catch (const std::exception& e) {
      if (!opts.skip_bad) throw;
      std::cerr << "skipping track " << t.name << ": " << e.what() << "\n";
      ++result.tracks_failed;
    }
  }
  data::save_manifest(result.manifest, opts.out / "manifest.jsonl");
  opts.cfg.save(opts.out / "effective_config.json");
  return result;
}

std::string format_thousands(uint64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  int count = 0;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (count && count % 3 == 0) out.push_back(',');
    out.push_back(*it);
    ++count;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::string format_stats_table(const data::Manifest& manifest) {
  auto fmt_hours = [](double h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), h >= 1.0 ? "%.1f" : "%.4f", h);
    return std::string(buf);
  };
  const auto train = data::manifest_stats(manifest, "train");
  const auto val = data::manifest_stats(manifest, "val");
  std::ostringstream os;
  os << "Set      # Hours    # Samples\n";
  os << "Train    " << fmt_hours(train.hours) << "    " << format_thousands(train.samples)
     << "\n";
  os << "Val      " << fmt_hours(val.hours) << "    " << format_thousands(val.samples) << "\n";
  return os.str();
}

}  // namespace s2v::cli
