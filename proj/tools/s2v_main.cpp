#include <CLI11.hpp>
#include <chrono>
#include <iostream>

#include "s2v/generation.hpp"
#include "s2v/gradcheck.hpp"
#include "s2v/prep.hpp"

namespace fs = std::filesystem;
using namespace s2v;

namespace {

// flags > config file > defaults
cli::RunConfig effective_config(const CLI::App* sub, const std::string& config_path,
                                uint64_t seed, bool seed_given) {
  cli::RunConfig cfg;
  if (!config_path.empty()) cfg = cli::RunConfig::load(config_path);
  if (seed_given) cfg.seed = seed;
  cfg.train.seed = cfg.seed;
  cfg.deblur.seed = cfg.seed;
  (void)sub;
  return cfg;
}

uint64_t hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash " + path.string());
  uint64_t h = 0xCBF29CE484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, size_t(in.gcount()), h);
  return h;
}

int cmd_prep(const cli::PrepOptions& opts) {
  const auto result = cli::run_prep(opts);
  std::cout << cli::format_stats_table(result.manifest);
  std::cout << "tracks ok: " << result.tracks_ok << ", failed: " << result.tracks_failed
            << "\n";
  std::cout << "manifest: " << (opts.out / "manifest.jsonl").string() << " (hash "
            << std::hex << hash_file(opts.out / "manifest.jsonl") << std::dec << ")\n";
  return result.tracks_failed > 0 && !opts.skip_bad ? 2 : 0;
}

int cmd_train(const cli::RunConfig& cfg, const fs::path& data, const fs::path& out,
              const std::string& pretrained, const std::string& resume) {
  const fs::path manifest = fs::is_directory(data) ? data / "manifest.jsonl" : data;
  data::PackedSource train_src(manifest, "train");
  data::PackedSource val_src(manifest, "val");
  if (train_src.size() == 0) throw DataError("manifest has no train samples");
  if (val_src.size() == 0)
    throw DataError("manifest has no val samples; prep a val/ split first");

  net::ModelParams pre;
  const net::ModelParams* pre_ptr = nullptr;
  if (!pretrained.empty()) {
    pre = ckpt::load_archive(pretrained).first;
    pre_ptr = &pre;
  }
  train::TrainState resumed;
  train::TrainState* resume_ptr = nullptr;
  if (!resume.empty()) {
    resumed = train::TrainState::load(resume);
    resume_ptr = &resumed;
    std::cout << "resuming at epoch " << resumed.epoch + 1 << "\n";
  }
  fs::create_directories(out);
  cfg.save(out / "effective_config.json");
  const auto result =
      train::train(train_src, val_src, cfg.net, cfg.mfcc, cfg.train, out, pre_ptr, resume_ptr);
  for (const auto& e : result.log)
    std::cout << "epoch " << e.epoch << ": train " << e.train_loss << ", val " << e.val_loss
              << " (" << e.wall_seconds << " s)\n";
  std::cout << "best val " << result.best_val << " after " << result.epochs_run
            << " epoch(s); checkpoint: " << result.best_checkpoint.string() << " (hash "
            << std::hex << hash_file(result.best_checkpoint) << std::dec << ")\n";
  return 0;
}

int cmd_train_deblur(const cli::RunConfig& cfg, const fs::path& faces_dir, const fs::path& out,
                     int holdout) {
  std::vector<Image> faces;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(faces_dir)) {
    const auto ext = e.path().extension().string();
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) faces.push_back(media::load_image(f));
  if (faces.empty()) throw DataError("no face images under " + faces_dir.string());

  std::vector<Image> held;
  if (holdout > 0 && int(faces.size()) > holdout) {
    held.assign(faces.end() - holdout, faces.end());
    faces.resize(faces.size() - size_t(holdout));
  }

  std::vector<train::EpochLog> log;
  auto checkpoint = train::train_deblur(faces, cfg.deblur, &log);
  fs::create_directories(out);
  cfg.save(out / "effective_config.json");
  const fs::path ckpt_path = out / "deblur_checkpoint.s2v";
  checkpoint.save(ckpt_path);
  train::write_log_csv(log, out / "deblur_log.csv");
  for (const auto& e : log)
    std::cout << "epoch " << e.epoch << ": train " << e.train_loss << "\n";

  if (!held.empty()) {
    gen::DeblurRunner runner(checkpoint);
    Rng rng(derive_seed(cfg.seed, "deblur-holdout"));
    double gain = 0;
    for (const auto& img : held) {
      const double sigma = rng.uniform(cfg.deblur.sigma_min, cfg.deblur.sigma_max);
      const Image blurred = deblur::synth_blur(img, sigma);
      gain += psnr(runner.apply(blurred), img) - psnr(blurred, img);
    }
    std::cout << "held-out PSNR gain: " << gain / double(held.size()) << " dB over "
              << held.size() << " image(s)\n";
  }
  std::cout << "checkpoint: " << ckpt_path.string() << "\n";
  return 0;
}

Tensor load_identity_stack(const std::vector<std::string>& paths, int expected_k) {
  if (int(paths.size()) != expected_k)
    throw DataError("checkpoint expects k=" + std::to_string(expected_k) +
                    " identity image(s), got " + std::to_string(paths.size()));
  std::vector<Image> stills;
  for (const auto& p : paths) {
    Image img = media::load_image(p);
    if (img.height() != net::kInputImage || img.width() != net::kInputImage)
      throw DataError("identity image " + p + " must be 112x112 (aligned crop), got " +
                      std::to_string(img.width()) + "x" + std::to_string(img.height()));
    stills.push_back(std::move(img));
  }
  return data::stack_identity_images(stills);
}

int cmd_generate(const fs::path& audio_path, const std::vector<std::string>& identity,
                 const fs::path& checkpoint, const fs::path& deblur_path, bool no_deblur,
                 double fps, const fs::path& out, bool report_timing) {
  gen::Generator model(ckpt::GeneratorCheckpoint::load(checkpoint));
  std::unique_ptr<gen::DeblurRunner> deblur_runner;
  if (!deblur_path.empty())
    deblur_runner = std::make_unique<gen::DeblurRunner>(ckpt::DeblurCheckpoint::load(deblur_path));

  media::AudioClip audio = media::load_audio(audio_path);
  if (audio.sample_rate != model.checkpoint().mfcc_cfg.sample_rate)
    audio = media::resample(audio, model.checkpoint().mfcc_cfg.sample_rate);
  const Tensor stack = load_identity_stack(identity, model.k());

  gen::GenerateOptions opts;
  opts.fps = fps;
  opts.apply_deblur = !no_deblur;
  const auto t0 = std::chrono::steady_clock::now();
  const auto frames = gen::generate_frames(audio, stack, model, deblur_runner.get(), opts);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  media::write_video(frames, audio, out);
  std::cout << "wrote " << frames.frames.size() << " frame(s) at " << frames.fps << " fps to "
            << out.string() << "\n";
  if (report_timing)
    std::cout << "synthesis throughput: " << double(frames.frames.size()) / secs
              << " frames/s (" << frames.frames.size() << " frames in " << secs << " s); "
              << "real-time factor " << (double(frames.frames.size()) / frames.fps) / secs
              << "\n";
  return 0;
}

int cmd_redub(const fs::path& source, const fs::path& landmarks_path,
              const fs::path& audio_path, const fs::path& checkpoint,
              const fs::path& deblur_path, bool no_deblur, const std::string& blend,
              std::vector<size_t> identity_frames, const fs::path& canonical_path,
              double feather, const fs::path& out, double fps_hint) {
  gen::Generator model(ckpt::GeneratorCheckpoint::load(checkpoint));
  std::unique_ptr<gen::DeblurRunner> deblur_runner;
  if (!deblur_path.empty())
    deblur_runner = std::make_unique<gen::DeblurRunner>(ckpt::DeblurCheckpoint::load(deblur_path));

  gen::RedubJob job;
  job.source = media::read_frames(source, fps_hint);
  job.landmarks = face::load_landmark_sidecar(landmarks_path);
  job.audio = media::load_audio(audio_path);
  if (job.audio.sample_rate != model.checkpoint().mfcc_cfg.sample_rate)
    job.audio = media::resample(job.audio, model.checkpoint().mfcc_cfg.sample_rate);
  job.canon = canonical_path.empty() ? face::default_canonical_face()
                                     : face::load_canonical_face(canonical_path);
  job.apply_deblur = !no_deblur;
  job.feather_px = feather;
  if (blend == "lower")
    job.blend = gen::BlendMode::Lower;
  else if (blend == "full")
    job.blend = gen::BlendMode::Full;
  else if (blend == "none")
    job.blend = gen::BlendMode::None;
  else
    throw DataError("unknown blend mode '" + blend + "' (use lower|full|none)");

  if (identity_frames.empty()) {
    // k stills spread evenly across the source
    const size_t n = job.source.frames.size();
    for (int i = 0; i < model.k(); ++i)
      identity_frames.push_back(std::min(n - 1, size_t(i) * n / size_t(model.k())));
  }
  job.identity_frames = std::move(identity_frames);

  const auto frames = gen::redub(job, model, deblur_runner.get());
  media::write_video(frames, job.audio, out);
  std::cout << "wrote " << frames.frames.size() << " frame(s) at " << frames.fps << " fps to "
            << out.string() << "\n";
  return 0;
}

int cmd_stats(const fs::path& manifest_path) {
  const auto manifest = data::load_manifest(manifest_path);
  std::cout << cli::format_stats_table(manifest);
  return 0;
}

int cmd_gradcheck(double multiplier, int k, int per_layer, double eps, double threshold,
                  uint64_t seed, int batch) {
  net::NetConfig cfg;
  cfg.channel_multiplier = multiplier;
  cfg.k_identity = k;
  const auto report = net::gradient_check_model(cfg, batch, per_layer, eps, seed);
  for (const auto& e : report.layers)
    std::cout << e.layer << ": max rel err " << e.max_rel_err << " over " << e.checked
              << " param(s)\n";
  std::cout << "worst: " << report.worst_rel_err << " (threshold " << threshold << ")\n";
  if (!report.passed(threshold)) {
    std::cerr << "gradient check FAILED\n";
    return 3;
  }
  std::cout << "gradient check passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"talking-face synthesis pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON config file")->configurable(false);
  auto* seed_opt = app.add_option("--seed", seed, "master RNG seed");

  // prep
  auto* prep = app.add_subcommand("prep", "build training samples from raw tracks");
  std::string prep_in, prep_out, prep_canon;
  bool skip_bad = false;
  int prep_k = 0, prep_gap = -1, prep_stride = 0;
  double prep_thresh = -1, prep_fps = 0;
  prep->add_option("--input", prep_in, "directory of track folders")->required();
  prep->add_option("--out", prep_out, "run directory")->required();
  prep->add_option("--canonical", prep_canon, "canonical face landmark file");
  prep->add_option("--k", prep_k, "identity stills per sample (1 or 5)");
  prep->add_option("--min-gap", prep_gap, "min identity/target distance in frames");
  prep->add_option("--every", prep_stride, "target frame stride");
  prep->add_option("--shot-threshold", prep_thresh, "chi-square shot boundary threshold");
  prep->add_option("--fps", prep_fps, "fps for frame directories without metadata");
  prep->add_flag("--skip-bad", skip_bad, "skip tracks that fail instead of aborting");

  // train
  auto* tr = app.add_subcommand("train", "train the generator");
  std::string tr_data, tr_out, tr_pre, tr_resume;
  double tr_lr = -1, tr_mom = -1, tr_mult = 0;
  int tr_bs = 0, tr_epochs = 0, tr_patience = 0, tr_k = 0, tr_emb = 0;
  bool tr_noskips = false, tr_nonorm = false;
  tr->add_option("--data", tr_data, "run directory or manifest path")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--lr", tr_lr, "learning rate");
  tr->add_option("--momentum", tr_mom, "SGD momentum");
  tr->add_option("--batch-size", tr_bs, "batch size");
  tr->add_option("--max-epochs", tr_epochs, "epoch cap");
  tr->add_option("--patience", tr_patience, "early-stop patience in epochs");
  tr->add_option("--k", tr_k, "identity stills per sample");
  tr->add_option("--channel-multiplier", tr_mult, "hidden width multiplier");
  tr->add_option("--embedding-dim", tr_emb, "encoder embedding size");
  tr->add_flag("--no-skips", tr_noskips, "disable identity skip connections");
  tr->add_flag("--no-normalize", tr_nonorm, "disable MFCC feature normalization");
  tr->add_option("--pretrained-identity", tr_pre, "archive with identity conv weights");
  tr->add_option("--resume", tr_resume, "training state to resume from");

  // train-deblur
  auto* td = app.add_subcommand("train-deblur", "train the sharpening net");
  std::string td_faces, td_out;
  int td_epochs = 0, td_bs = 0, td_width = 0, td_patch = -1, td_holdout = 0;
  double td_lr = -1, td_smin = -1, td_smax = -1;
  td->add_option("--faces", td_faces, "directory of sharp face images")->required();
  td->add_option("--out", td_out, "output directory")->required();
  td->add_option("--epochs", td_epochs, "training epochs");
  td->add_option("--batch-size", td_bs, "batch size");
  td->add_option("--width", td_width, "hidden channels");
  td->add_option("--patch", td_patch, "training crop size (0 = full image)");
  td->add_option("--lr", td_lr, "learning rate");
  td->add_option("--sigma-min", td_smin, "min blur sigma");
  td->add_option("--sigma-max", td_smax, "max blur sigma");
  td->add_option("--holdout", td_holdout, "images reserved for a PSNR report");

  // generate
  auto* ge = app.add_subcommand("generate", "synthesize a talking face for an audio file");
  std::string ge_audio, ge_ckpt, ge_deblur, ge_out;
  std::vector<std::string> ge_identity;
  double ge_fps = 25.0;
  bool ge_nodeblur = false, ge_timing = false;
  ge->add_option("--audio", ge_audio, "WAV file")->required();
  ge->add_option("--identity", ge_identity, "aligned 112x112 identity image(s)")
      ->required()
      ->delimiter(',');
  ge->add_option("--checkpoint", ge_ckpt, "generator checkpoint")->required();
  ge->add_option("--deblur-checkpoint", ge_deblur, "deblur checkpoint");
  ge->add_option("--fps", ge_fps, "output frame rate");
  ge->add_option("--out", ge_out, "output video path (directory or .mp4)")->required();
  ge->add_flag("--no-deblur", ge_nodeblur, "skip the sharpening pass");
  ge->add_flag("--report-timing", ge_timing, "print synthesis throughput");

  // redub
  auto* rd = app.add_subcommand("redub", "replace the speech of a source video");
  std::string rd_src, rd_lms, rd_audio, rd_ckpt, rd_deblur, rd_canon, rd_out;
  std::string rd_blend = "lower";
  std::vector<size_t> rd_idframes;
  double rd_feather = 3.0, rd_fps = 25.0;
  bool rd_nodeblur = false;
  rd->add_option("--source", rd_src, "source video (frame directory or container)")->required();
  rd->add_option("--landmarks", rd_lms, "landmark sidecar for the source")->required();
  rd->add_option("--audio", rd_audio, "replacement WAV")->required();
  rd->add_option("--checkpoint", rd_ckpt, "generator checkpoint")->required();
  rd->add_option("--deblur-checkpoint", rd_deblur, "deblur checkpoint");
  rd->add_option("--blend", rd_blend, "lower|full|none");
  rd->add_option("--identity-frames", rd_idframes, "source frames used as identity stills")
      ->delimiter(',');
  rd->add_option("--canonical", rd_canon, "canonical face landmark file");
  rd->add_option("--feather", rd_feather, "mask feather in px");
  rd->add_option("--fps", rd_fps, "fps for frame directories without metadata");
  rd->add_option("--out", rd_out, "output video path")->required();
  rd->add_flag("--no-deblur", rd_nodeblur, "skip the sharpening pass");

  // stats
  auto* st = app.add_subcommand("stats", "print dataset statistics for a manifest");
  std::string st_manifest;
  st->add_option("--manifest", st_manifest, "manifest.jsonl")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  double gc_mult = 0.125, gc_eps = 1e-3, gc_thresh = 1e-3;
  int gc_k = 1, gc_per = 20, gc_batch = 1;
  gc->add_option("--channel-multiplier", gc_mult, "hidden width multiplier");
  gc->add_option("--k", gc_k, "identity stills");
  gc->add_option("--per-layer", gc_per, "parameters sampled per layer");
  gc->add_option("--eps", gc_eps, "finite-difference step");
  gc->add_option("--threshold", gc_thresh, "max tolerated relative error");
  gc->add_option("--batch", gc_batch, "batch size for the probe");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    cli::RunConfig cfg = effective_config(&app, config_path, seed, seed_opt->count() > 0);

    if (prep->parsed()) {
      if (prep_k) cfg.net.k_identity = prep_k;
      if (prep_gap >= 0) cfg.prep.min_gap_frames = prep_gap;
      if (prep_stride) cfg.prep.frame_stride = prep_stride;
      if (prep_thresh >= 0) cfg.prep.shot_threshold = prep_thresh;
      if (prep_fps > 0) cfg.prep.fps = prep_fps;
      cli::PrepOptions opts;
      opts.cfg = cfg;
      opts.input = prep_in;
      opts.out = prep_out;
      opts.canonical_path = prep_canon;
      opts.skip_bad = skip_bad;
      return cmd_prep(opts);
    }
    if (tr->parsed()) {
      if (tr_lr >= 0) cfg.train.learning_rate = tr_lr;
      if (tr_mom >= 0) cfg.train.momentum = tr_mom;
      if (tr_bs) cfg.train.batch_size = tr_bs;
      if (tr_epochs) cfg.train.max_epochs = tr_epochs;
      if (tr_patience) cfg.train.patience = tr_patience;
      if (tr_k) cfg.net.k_identity = tr_k;
      if (tr_mult > 0) cfg.net.channel_multiplier = tr_mult;
      if (tr_emb) cfg.net.embedding_dim = tr_emb;
      if (tr_noskips) cfg.net.skips_enabled = false;
      if (tr_nonorm) cfg.train.normalize_audio = false;
      return cmd_train(cfg, tr_data, tr_out, tr_pre, tr_resume);
    }
    if (td->parsed()) {
      if (td_epochs) cfg.deblur.epochs = td_epochs;
      if (td_bs) cfg.deblur.batch_size = td_bs;
      if (td_width) cfg.deblur.net.hidden_channels = td_width;
      if (td_patch >= 0) cfg.deblur.patch = td_patch;
      if (td_lr >= 0) cfg.deblur.learning_rate = td_lr;
      if (td_smin >= 0) cfg.deblur.sigma_min = td_smin;
      if (td_smax >= 0) cfg.deblur.sigma_max = td_smax;
      return cmd_train_deblur(cfg, td_faces, td_out, td_holdout);
    }
    if (ge->parsed())
      return cmd_generate(ge_audio, ge_identity, ge_ckpt, ge_deblur, ge_nodeblur, ge_fps,
                          ge_out, ge_timing);
    if (rd->parsed())
      return cmd_redub(rd_src, rd_lms, rd_audio, rd_ckpt, rd_deblur, rd_nodeblur, rd_blend,
                       rd_idframes, rd_canon, rd_feather, rd_out, rd_fps);
    if (st->parsed()) return cmd_stats(st_manifest);
    if (gc->parsed())
      return cmd_gradcheck(gc_mult, gc_k, gc_per, gc_eps, gc_thresh, cfg.seed, gc_batch);
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
